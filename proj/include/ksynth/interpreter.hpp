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
#include <map>
#include <string>
#include <utility>

#include "ksynth/fused.hpp"
#include "ksynth/graph.hpp"
#include "ksynth/tensor.hpp"

namespace ksynth {

using ValueMap = std::map<std::string, TensorValue>;

struct EvalOptions {
  /// Execute kernel_call nodes with their pattern's mixed-precision policy.
  /// When false they run in exact fp64.
  bool emulate_kernels = true;
  /// Storage rounding applied to a value on a specific (consumer, producer)
  /// edge. Used to hand the reference the same rounded boundary operands a
  /// fused kernel sees.
  std::map<std::pair<std::string, std::string>, DType> edge_casts;
  /// Replaces the value on a (consumer, producer) edge before any cast.
  /// Lets a reference subgraph consume exactly what a kernel consumed.
  std::map<std::pair<std::string, std::string>, TensorValue> edge_values;
};

/// Deterministic values for every leaf node of `g` that `given` lacks.
/// Inputs and rank-1 parameters are uniform [-1, 1); rank >= 2 parameters
/// are additionally scaled by 1/sqrt(fan_in). Each tensor draws from its
/// own stream keyed by node id, so values do not depend on graph order.
ValueMap make_leaf_values(const CompGraph& g, std::uint64_t seed, const ValueMap& given = {});

/// Reference interpreter. Values for graph inputs must be supplied;
/// parameters and constants default to make_leaf_values(seed).
/// Returns the value of every node.
ValueMap eval_all(const CompGraph& g, const ValueMap& inputs, std::uint64_t seed = 42,
                  const EvalOptions& opts = {});

/// As eval_all, restricted to graph outputs.
ValueMap eval(const CompGraph& g, const ValueMap& inputs, std::uint64_t seed = 42, const EvalOptions& opts = {});

/// Precision policy a kernel_call node executes under.
PrecisionPolicy kernel_policy(const Node& call);

// Textbook kernels, exposed for oracle tests.
TensorValue softmax_last(const TensorValue& x);

}  // namespace ksynth
