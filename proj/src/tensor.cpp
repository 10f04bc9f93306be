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

#include "ksynth/tensor.hpp"

namespace ksynth {

TensorValue::TensorValue(TensorMeta m, std::vector<double> d) : meta(std::move(m)), data(std::move(d)) {
  if (static_cast<std::int64_t>(data.size()) != meta.numel()) {
    throw ValidationError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                          shape_str(meta.shape));
  }
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  return splitmix64(splitmix64(seed_ ^ splitmix64(stream_)) + counter);
}

double CounterRng::uniform(std::uint64_t counter) const {
  // 53 random mantissa bits -> [0,1) -> [-1,1).
  const double u = static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

std::uint64_t stream_id(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TensorValue random_tensor(const TensorMeta& meta, std::uint64_t seed, std::uint64_t stream, double scale) {
  TensorValue t(meta);
  const CounterRng rng(seed, stream);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = scale * rng.uniform(i);
  return t;
}

}  // namespace ksynth
