/*
 * Copyright 2026 The ksynth Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "ksynth/graph.hpp"

namespace ksynth {

/// Dense row-major tensor held at fp64 regardless of its nominal dtype.
struct TensorValue {
  TensorMeta meta;
  std::vector<double> data;

  TensorValue() = default;
  explicit TensorValue(TensorMeta m, double fill = 0.0)
      : meta(std::move(m)), data(static_cast<std::size_t>(meta.numel()), fill) {}
  TensorValue(TensorMeta m, std::vector<double> d);

  std::size_t size() const { return data.size(); }
  const Shape& shape() const { return meta.shape; }
};

/// Counter-based generator: value i of stream s depends only on (seed, s, i).
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform in [-1, 1).
  double uniform(std::uint64_t counter) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// FNV-1a; used to derive per-tensor streams from node ids.
std::uint64_t stream_id(std::string_view name);

/// Uniform [-1, 1) tensor scaled by `scale`.
TensorValue random_tensor(const TensorMeta& meta, std::uint64_t seed, std::uint64_t stream, double scale = 1.0);

}  // namespace ksynth
