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

// The (pattern, best-config) pairs with committed golden emissions. Shared
// by the codegen tests and the acceptance binary.

#include <stdexcept>
#include <string>
#include <vector>

#include "ksynth/codegen.hpp"
#include "ksynth/trace.hpp"

namespace ksynth::testing {

struct GoldenCase {
  std::string fixture;
  Arch arch;
  RuleTag rule;
  std::string slug;  // empty: the rule's default config
};

// Best configurations per cell, plus the Level-3 patterns at their fixed configs.
inline const std::vector<GoldenCase> kGolden = {
    {"p1_square_gemm", Arch::SM80, RuleTag::GEMM, "tb128x256x32-s3"},
    {"p1_square_gemm", Arch::SM90, RuleTag::GEMM, "tb128x256x64-c2x1x1-coop"},
    {"p3_batched_gemm", Arch::SM80, RuleTag::BatchedGEMM, "tb128x256x32-s3"},
    {"p3_batched_gemm", Arch::SM90, RuleTag::BatchedGEMM, "tb128x256x64-c1x1x1-coop"},
    {"p6_large_k_gemm", Arch::SM80, RuleTag::GEMM_StreamK, "tb64x128x64-s4"},
    {"p6_large_k_gemm", Arch::SM90, RuleTag::GEMM_StreamK, "tb128x128x64-c2x2x1-coop"},
    {"minigpt_block", Arch::SM80, RuleTag::FMHA, ""},
    {"minigpt_block", Arch::SM80, RuleTag::MLP_GELU, ""},
    {"minigpt_block", Arch::SM90, RuleTag::FMHA, ""},
    {"minigpt_block", Arch::SM90, RuleTag::MLP_GELU, ""},
    {"llama3_block", Arch::SM80, RuleTag::FMHA_GQA, ""},
    {"llama3_block", Arch::SM80, RuleTag::MLP_SwiGLU, ""},
    {"llama3_block", Arch::SM90, RuleTag::FMHA_GQA, ""},
    {"llama3_block", Arch::SM90, RuleTag::MLP_SwiGLU, ""},
};

inline ProposedPattern find_pattern(const std::string& data_dir, const std::string& fixture, Arch arch, RuleTag rule) {
  for (const auto& p : propose_patterns(load_trace_file(data_dir + "/traces/" + fixture + ".json"), arch)) {
    if (p.rule == rule) return p;
  }
  throw std::runtime_error("no " + std::string(to_string(rule)) + " proposal on " + fixture);
}

inline KernelSpec emit_golden(const std::string& data_dir, const GoldenCase& gc, ProposedPattern* out_pattern = nullptr,
                              TuneConfig* out_config = nullptr) {
  const ProposedPattern p = find_pattern(data_dir, gc.fixture, gc.arch, gc.rule);
  const TuneConfig c = gc.slug.empty() ? default_config(p) : parse_slug(gc.slug);
  if (out_pattern) *out_pattern = p;
  if (out_config) *out_config = c;
  return emit_kernel(p, c, arch_profile(gc.arch));
}

}  // namespace ksynth::testing
