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

#include "ksynth/rules.hpp"

#include <string>

#include "ksynth/dtype.hpp"

namespace ksynth {

std::string_view to_string(RuleTag r) {
  switch (r) {
    case RuleTag::GEMM: return "GEMM";
    case RuleTag::BatchedGEMM: return "BatchedGEMM";
    case RuleTag::GEMM_StreamK: return "GEMM_StreamK";
    case RuleTag::FMHA: return "FMHA";
    case RuleTag::FMHA_GQA: return "FMHA_GQA";
    case RuleTag::MLP_GELU: return "MLP_GELU";
    case RuleTag::MLP_SwiGLU: return "MLP_SwiGLU";
  }
  return "GEMM";
}

std::optional<RuleTag> parse_rule(std::string_view s) {
  for (auto r : kAllRules) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

RuleTag rule_or_throw(std::string_view s) {
  if (auto r = parse_rule(s)) return *r;
  throw ValidationError("unknown rule '" + std::string(s) + "'");
}

}  // namespace ksynth
