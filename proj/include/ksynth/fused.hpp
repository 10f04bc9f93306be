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

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "ksynth/graph.hpp"
#include "ksynth/precision.hpp"
#include "ksynth/rules.hpp"
#include "ksynth/tensor.hpp"

namespace ksynth {

/// Deliberate semantic faults used to prove the verifier can see them.
enum class FusedMutation {
  none,
  drop_causal_mask,
  drop_scale,
  skip_activation,
  wrong_kv_group,
  swap_gate_up,
};

std::string_view to_string(FusedMutation m);
std::optional<FusedMutation> parse_mutation(std::string_view s);

/// Rule-specific knobs of the fused semantics.
struct FusedParams {
  // Attention.
  std::int64_t num_heads = 1;
  std::int64_t kv_heads = 1;
  std::int64_t head_dim = 0;
  double scale = 1.0;
  bool causal = false;
  bool packed_qkv = false;
  std::int64_t keys_per_block = 4;
  // Stream-K: number of K partitions whose partial sums are fixed up.
  std::int64_t k_splits = 4;

  FusedMutation mutation = FusedMutation::none;

  void to_attrs(Attrs& attrs) const;
  static FusedParams from_attrs(const Node& node);
};

using NamedTensors = std::map<std::string, TensorValue>;

/// Evaluates a rule's fused kernel semantics on named boundary tensors.
///
/// Roles: GEMM rules take "A","B". Attention takes "x", either
/// "w_qkv"[,"b_qkv"] or "w_q","w_k","w_v" (optional "b_q","b_k","b_v"),
/// and "w_o"[,"b_o"]. MLP_GELU takes "x","w1","b1","w2","b2" (biases
/// optional). MLP_SwiGLU takes "x","w_gate","w_up","w_down".
///
/// Attention uses streaming (online) softmax over key blocks; the MLP forms
/// apply activations inside the GEMM epilogue. Operands are rounded to the
/// policy's operand format on entry, dot products accumulate in the
/// accumulator format, and the result is rounded to the output format.
TensorValue eval_fused(RuleTag rule, const NamedTensors& inputs, const FusedParams& params,
                       const PrecisionPolicy& policy = PrecisionPolicy::exact());

/// tanh-approximation GELU and x*sigmoid(x), shared with the interpreter.
double gelu_tanh(double x);
double silu(double x);

}  // namespace ksynth
