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
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksynth/allclose.hpp"
#include "ksynth/discovery.hpp"
#include "ksynth/graph.hpp"

namespace ksynth {

/// Overlapping patterns, dangling consumers, missing timings.
class CompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One subgraph to replace: what the kernel_call node records about it.
struct CallSite {
  std::string pattern_id;
  std::string registry_id;
  RuleTag rule = RuleTag::GEMM;
  DType dtype = DType::fp16;
  std::set<std::string> node_ids;
  FusedMutation mutation = FusedMutation::none;
};

CallSite call_site(const ProposedPattern& p, const std::string& registry_id);

/// Id of the node replacing a pattern: "kc_<pattern_id>".
std::string kernel_call_id(const std::string& pattern_id);

/// Replaces each site's subgraph with one kernel_call node. Consumers of the
/// pattern output are rewired to the call; graph inputs and outputs keep
/// their ids and metas. Sites must be node-disjoint.
CompGraph rewrite(const CompGraph& g, const std::vector<CallSite>& sites);
CompGraph rewrite(const CompGraph& g, const std::vector<ProposedPattern>& accepted,
                  const std::vector<std::string>& registry_ids);

/// Reads the sites back out of a rewritten graph's kernel_call nodes.
std::vector<CallSite> call_sites(const CompGraph& rewritten);

/// Sets the mutation on every kernel_call of `rule`. Returns how many.
std::size_t inject_mutation(CompGraph& rewritten, RuleTag rule, FusedMutation m);

struct OutputCheck {
  std::string id;
  CloseReport close;
};

struct CompositionReport {
  bool pass = true;
  std::uint64_t seed = 42;
  ToleranceSpec tol;
  DimBindings dims;
  std::vector<OutputCheck> kernels;  // one per kernel_call, keyed by call id
  std::vector<OutputCheck> outputs;  // one per graph output

  nlohmann::ordered_json to_json() const;
};

/// Runs `rewritten` with every kernel_call under its mixed-precision policy
/// and `original` in fp64 on the same seeded leaves, then checks each kernel
/// and each graph output at `tol`.
///
/// Reference subgraphs consume exactly the operands their kernel consumed,
/// rounded to the pattern dtype. Without this, fp32-level differences
/// upstream flip fp16 roundings at the next kernel boundary, which no
/// fixed tolerance absorbs. Checking every kernel output as well as the
/// graph outputs keeps one kernel from hiding another's fault.
///
/// A non-empty `dims` re-binds the original and re-applies the rewritten
/// graph's sites at those dimensions first.
CompositionReport verify_composed(const CompGraph& original, const CompGraph& rewritten, const DimBindings& dims = {},
                                  const ToleranceSpec& tol = {}, std::uint64_t seed = 42);

struct Variant {
  std::string label;  // "baseline", "<rule>-only" or "all"
  std::vector<std::string> pattern_ids;
  CompGraph graph;
};

/// Baseline, one variant per accepted rule (when there are two or more),
/// and "all". Singletons are ordered by rule.
std::vector<Variant> ablate(const CompGraph& g, const std::vector<CallSite>& accepted);

struct CompilerRow {
  std::string name;
  double mean_ms = 0;
};

/// Per-variant block timings plus report-only compiler rows.
struct BlockTimings {
  std::string block;
  std::string source;
  std::map<std::string, double> variants_ms;
  std::vector<CompilerRow> compilers;

  static BlockTimings from_json(const nlohmann::json& j);
  static BlockTimings load(const std::filesystem::path& path);
};

/// Shipped replay fixture for a trace name, e.g. "minigpt_block".
std::filesystem::path block_replay_path(const std::string& trace_name);

/// Half-up rounding to `places` decimals on the decimal representation.
double round_half_up(double x, int places);

struct VariantTiming {
  std::string label;
  std::vector<std::string> pattern_ids;
  double mean_ms = 0;
  double speedup = 1.0;  // baseline_ms / mean_ms, unrounded
};

struct BenchReport {
  std::string block;
  std::string source;
  std::vector<VariantTiming> variants;
  std::vector<CompilerRow> compilers;

  const VariantTiming& at(const std::string& label) const;
  nlohmann::ordered_json to_json() const;
  /// | variant | mean_ms | speedup |, compiler rows after the variants.
  std::string to_markdown() const;
};

BenchReport bench_report(const std::vector<Variant>& variants, const BlockTimings& timings);

/// A deliberate semantic fault applied to a composed block.
struct MutationFixture {
  std::string name;
  std::string trace;
  Arch arch = Arch::SM80;
  RuleTag rule = RuleTag::FMHA;
  FusedMutation mutation = FusedMutation::none;
  std::string description;
};

/// data/mutations/*.json, sorted by name.
std::vector<MutationFixture> load_mutation_fixtures(const std::filesystem::path& dir = {});

}  // namespace ksynth
