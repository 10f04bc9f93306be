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
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ksynth/examples_index.hpp"
#include "ksynth/fused.hpp"
#include "ksynth/graph.hpp"
#include "ksynth/rules.hpp"

namespace ksynth {

/// Ordered role -> boundary node id binding of a matched subgraph.
using RoleBinding = std::vector<std::pair<std::string, std::string>>;

/// A structural match together with what a fused kernel needs to replace it.
struct PatternMatch {
  RuleTag rule = RuleTag::GEMM;
  std::set<std::string> node_ids;
  RoleBinding roles;
  std::string output;  // the single boundary output
  FusedParams params;
};

/// All structural matches of one rule, in topological order of their anchor.
std::vector<PatternMatch> find_matches(const CompGraph& g, RuleTag rule);

/// Node-id sets of find_matches.
std::vector<std::set<std::string>> match_rule(const CompGraph& g, RuleTag rule);

/// Re-derives a match from a node set. Returns nothing if the set is not
/// exactly one structural instance of `rule`.
std::optional<PatternMatch> analyze_pattern(const CompGraph& g, RuleTag rule, const std::set<std::string>& ids);

/// Stream-K threshold on K / max(M, N).
inline constexpr std::int64_t kStreamKRatio = 64;

/// FLOPs: 2*M*N*K per (batched) product, one per element for elementwise
/// ops and bias adds, five per element for softmax and normalizations,
/// zero for layout, leaf and dropout nodes.
std::int64_t flop_estimate(const CompGraph& g, const std::set<std::string>& ids);

struct ImplementationNotes {
  std::string pipelining;
  std::string grid_schedule;
  std::string tensor_cores;
  bool operator==(const ImplementationNotes&) const = default;
};

struct PatternDescriptor {
  std::string pattern_id;
  std::string name;
  std::string optimization_rule;
  std::string target_architecture;
  std::vector<std::pair<std::string, Shape>> input_shapes;
  std::string data_type;
  std::optional<std::string> computation_precision;
  ImplementationNotes implementation_notes;
  std::string supporting_example;

  nlohmann::ordered_json to_json() const;
  static PatternDescriptor from_json(const nlohmann::ordered_json& j);
  bool operator==(const PatternDescriptor&) const = default;
};

struct ProposedPattern {
  std::string pattern_id;
  RuleTag rule = RuleTag::GEMM;
  std::set<std::string> node_ids;
  DType dtype = DType::fp32;
  Arch arch = Arch::SM80;
  PatternDescriptor descriptor;
  std::vector<std::string> supporting_examples;  // example ids, best first
  std::int64_t score = 0;
  int priority_rank = 0;
  // Boundary binding used by realization and composition.
  RoleBinding roles;
  std::string output;
  FusedParams params;

  nlohmann::ordered_json to_json() const;
  static ProposedPattern from_json(const nlohmann::ordered_json& j);
};

/// Default computation dtype for a rule on an architecture.
DType default_dtype(RuleTag rule, Arch arch);

PatternDescriptor make_descriptor(const CompGraph& g, const PatternMatch& m, Arch arch, DType dtype,
                                  const std::string& pattern_id, const std::string& supporting_example);

/// Runs every matcher, keeps the higher-scoring pattern on overlap, ranks by
/// score (ties by earliest node), attaches up to three examples and fills
/// descriptors. `dtype_override` replaces the per-rule default policy.
std::vector<ProposedPattern> propose_patterns(const CompGraph& g, Arch arch,
                                              std::optional<DType> dtype_override = std::nullopt,
                                              const ExampleCatalog& catalog = default_catalog());

/// Checks every ProposedPattern invariant against the graph: convexity,
/// rule predicate, score, rank order, disjointness and arch. Missing
/// role bindings are derived from the graph; present ones must agree.
/// Throws ValidationError describing the first violation.
std::vector<ProposedPattern> validate_proposals(const CompGraph& g, Arch arch,
                                                std::vector<ProposedPattern> proposals);

/// Proposals document: {schema_version, arch, graph, proposals}.
nlohmann::ordered_json proposals_document(const CompGraph& g, Arch arch, const std::vector<ProposedPattern>& ps);

struct ProposalsDoc {
  CompGraph graph;
  Arch arch = Arch::SM80;
  std::vector<ProposedPattern> proposals;
};
/// Takes ordered_json because role order is significant.
ProposalsDoc parse_proposals_document(const nlohmann::ordered_json& doc);

}  // namespace ksynth
