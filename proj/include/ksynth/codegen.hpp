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

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ksynth/discovery.hpp"
#include "ksynth/tuner.hpp"

namespace ksynth {

/// Unsupported combination, template problem or config/template mismatch.
class CodegenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KernelSpec {
  std::string pattern_id;
  RuleTag rule = RuleTag::GEMM;
  DType dtype = DType::fp32;
  Arch arch = Arch::SM80;
  TuneConfig config;
  std::string source_text;
  std::string wrapper_text;
  std::string entry_symbol;
  std::vector<std::string> launchers;  // one extern "C" symbol per stage
  std::vector<std::string> build_flags;
  std::string content_hash;  // SHA-256 of source_text
};

struct EmitOptions {
  /// Templates found here shadow the shipped ones in <data>/templates.
  std::filesystem::path template_dir;
  /// Which supporting example the emission cites (0 = best ranked).
  std::size_t example_rank = 0;
};

/// Attention tile for a head dimension: (64, 64) up to d = 64, else (32, 128).
std::pair<int, int> fmha_tile(std::int64_t head_dim);

/// Config used when no search space applies to the pattern's rule, or as
/// the starting point for GEMM rules before tuning.
TuneConfig default_config(const ProposedPattern& p);

/// The (first) GEMM problem a pattern poses, used for config validation and
/// tuning. Operands use the pattern dtype; accumulator and output are fp32.
GemmProblem gemm_problem(const ProposedPattern& p);

/// Renders the kernel translation unit and its wrapper. Pure function of
/// its inputs and the template files.
KernelSpec emit_kernel(const ProposedPattern& p, const TuneConfig& config, const ArchProfile& profile,
                       const EmitOptions& opts = {});

/// Renders the host binding: one exported function taking the boundary
/// tensors in role order plus the output tensor.
std::string emit_wrapper(const KernelSpec& spec, const ProposedPattern& p, const EmitOptions& opts = {});

struct StructuralReport {
  std::vector<std::string> violations;  // each starts with its category, e.g. "arch mismatch: ..."
  bool ok() const { return violations.empty(); }
  bool has(std::string_view category) const;
};

StructuralReport structural_check(const KernelSpec& spec, const ProposedPattern& p, const TuneConfig& config);

/// Writes <root>/<pattern_id>/<slug>/{kernel.cu, wrapper.cpp}; returns the
/// directory.
std::filesystem::path write_spec(const KernelSpec& spec, const std::filesystem::path& root);

}  // namespace ksynth
