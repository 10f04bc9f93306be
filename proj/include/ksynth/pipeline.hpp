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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksynth/allclose.hpp"
#include "ksynth/composer.hpp"
#include "ksynth/registry.hpp"

namespace ksynth {

/// Process exit codes. Every command returns exactly one of these.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 1,           // parse/validation errors, unknown keys, missing prerequisites
  kExitInfra = 2,           // registry I/O, executor protocol, internal errors
  kExitNoProposals = 3,     // discover found nothing
  kExitVerifyFailed = 4,    // compose verification failed (reports still written)
};

inline constexpr const char* kRegistryEnv = "KSYNTH_REGISTRY";

/// --registry wins, then $KSYNTH_REGISTRY, then ./registry.
std::filesystem::path resolve_registry_path(const std::optional<std::string>& flag);

struct RunConfig {
  Arch arch = Arch::SM80;
  std::optional<DType> dtype;  // nullopt: per-rule default
  std::filesystem::path registry = "registry";
  std::string executor = "analytic";  // analytic | replay:<name|path> | external:<command>
  std::string planner = "builtin";    // builtin | external:<command>
  std::optional<std::string> space;   // overrides the shipped space for GEMM rules
  std::uint64_t seed = 42;
  bool reuse = true;
  bool deterministic = false;
  double accept_threshold = 1.0;
  int max_attempts = 3;
  int concurrency = 1;
  std::filesystem::path template_dir;
  ToleranceSpec tol;
};

struct CommandStatus {
  int exit_code = kExitOk;
  std::string message;  // human-readable summary or diagnostic
};

// discover ------------------------------------------------------------------

struct DiscoverResult : CommandStatus {
  nlohmann::ordered_json document;
  std::size_t proposals = 0;
};

/// Ingests a trace and proposes patterns. Exit 3 when nothing matches.
DiscoverResult run_discover(const std::filesystem::path& trace, const RunConfig& cfg);

// realize -------------------------------------------------------------------

struct AttemptRecord {
  int attempt = 0;
  std::size_t example_rank = 0;
  std::string example;
  std::string outcome;  // ok | emit_error | structural | verification
  std::string detail;
};

struct PatternOutcome {
  std::string pattern_id;
  RuleTag rule = RuleTag::GEMM;
  std::string status;  // inserted | reused | skipped
  std::string registry_id;
  std::string reason;  // why skipped
  std::vector<AttemptRecord> attempts;
  std::optional<TuningRecord> tuning;
  std::optional<BenchmarkRecord> benchmark;
};

struct RealizeResult : CommandStatus {
  std::vector<PatternOutcome> patterns;
  std::size_t emissions = 0;
  std::size_t reuses = 0;

  nlohmann::ordered_json to_json() const;
};

/// emit -> structural_check -> isolated desk-scale verification -> tune ->
/// insert, per pattern. A pattern that fails all attempts, has no viable
/// config or misses the accept threshold is skipped; the others continue.
/// Kernels are staged under `staging` before insertion.
RealizeResult run_realize(const std::filesystem::path& proposals, const RunConfig& cfg,
                          const std::filesystem::path& staging);

// compose -------------------------------------------------------------------

struct ComposeOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::filesystem::path> timings;  // default: shipped block replay for the trace
  std::optional<std::string> mutation;           // name of a shipped mutation fixture
  int trials = 20;                               // seeds cfg.seed .. cfg.seed + trials - 1
};

struct ComposeResult : CommandStatus {
  bool verified = false;
  std::vector<std::string> replaced;    // pattern ids
  std::vector<std::string> unreplaced;  // proposals with no accepted entry
  std::vector<CompositionReport> verification;
  std::optional<BenchReport> bench;
  std::vector<std::filesystem::path> written;
};

/// Writes <out>/<trace>.composed.json, <out>/verification.json and, when a
/// timing source exists, <out>/bench.json and <out>/bench.md.
ComposeResult run_compose(const std::filesystem::path& trace, const RunConfig& cfg, const ComposeOptions& opts);

// registry ------------------------------------------------------------------

/// Fixed-width table, one row per entry, in the given order.
std::string registry_table(const std::vector<RegistryEntry>& entries);

/// "4096x4096,4096x4096" -> {{4096,4096},{4096,4096}}.
std::vector<Shape> parse_shape_list(const std::string& text);

}  // namespace ksynth
