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

#include <array>
#include <optional>
#include <string_view>

namespace ksynth {

/// Optimization rules recognized by discovery. Closed set.
enum class RuleTag { GEMM, BatchedGEMM, GEMM_StreamK, FMHA, FMHA_GQA, MLP_GELU, MLP_SwiGLU };

inline constexpr std::array<RuleTag, 7> kAllRules = {RuleTag::GEMM,     RuleTag::BatchedGEMM, RuleTag::GEMM_StreamK,
                                                     RuleTag::FMHA,     RuleTag::FMHA_GQA,    RuleTag::MLP_GELU,
                                                     RuleTag::MLP_SwiGLU};

std::string_view to_string(RuleTag r);
std::optional<RuleTag> parse_rule(std::string_view s);
RuleTag rule_or_throw(std::string_view s);

inline bool is_gemm_rule(RuleTag r) {
  return r == RuleTag::GEMM || r == RuleTag::BatchedGEMM || r == RuleTag::GEMM_StreamK;
}
inline bool is_attention_rule(RuleTag r) { return r == RuleTag::FMHA || r == RuleTag::FMHA_GQA; }
inline bool is_mlp_rule(RuleTag r) { return r == RuleTag::MLP_GELU || r == RuleTag::MLP_SwiGLU; }

}  // namespace ksynth
