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
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksynth/dtype.hpp"
#include "ksynth/rules.hpp"

namespace ksynth {

using Tile = std::array<int, 3>;     // (M, N, K)
using Cluster = std::array<int, 3>;  // (x, y, z)

enum class Schedule { cooperative, pingpong };
std::string_view to_string(Schedule s);

enum class GridSchedule { data_parallel, batched, stream_k, split_k };
std::string_view to_string(GridSchedule s);

struct ArchProfile {
  Arch arch = Arch::SM80;
  std::int64_t smem_capacity_bytes = 0;
  std::map<DType, double> peak_tflops;
  std::vector<Tile> tile_catalog;
  std::vector<Tile> warp_catalog;  // SM80 only
  int min_stages = 2, max_stages = 8;
  std::vector<Cluster> cluster_catalog;  // SM90 only
  std::vector<Schedule> schedules;       // SM90 only
  int max_threads = 1024;

  double peak(DType t) const;
};

/// A100 (SM80) or H100 (SM90) model.
const ArchProfile& arch_profile(Arch arch);

struct TuneConfig {
  Arch arch = Arch::SM80;
  Tile tb_tile{};
  Tile warp_tile{};  // SM80
  int stages = 0;    // SM80
  Cluster cluster{1, 1, 1};                 // SM90
  Schedule schedule = Schedule::cooperative;  // SM90

  /// "tb128x256x32-s3" or "tb128x256x64-c2x1x1-coop" / "-pp".
  std::string slug() const;
  nlohmann::ordered_json to_json() const;
  static TuneConfig from_json(const nlohmann::json& j);
  auto operator<=>(const TuneConfig&) const = default;
};

/// Parses a slug back into a config; SM80 warp tiles are re-derived.
TuneConfig parse_slug(const std::string& slug);

struct GemmProblem {
  std::int64_t M = 1, N = 1, K = 1, batch = 1;
  DType dtype_in = DType::fp32, dtype_acc = DType::fp32, dtype_out = DType::fp32;
  GridSchedule grid_schedule = GridSchedule::data_parallel;

  double flops() const { return 2.0 * static_cast<double>(M) * N * K * batch; }
  nlohmann::ordered_json to_json() const;
  static GemmProblem from_json(const nlohmann::json& j);
};

struct Protocol {
  int warmup = 5;
  int timed = 20;
};

enum class TuneStatus { ok, launch_failure, invalid };
std::string_view to_string(TuneStatus s);

struct TuneResult {
  TuneConfig config;
  TuneStatus status = TuneStatus::invalid;
  double mean_ms = 0;
  double tflops = 0;
  double speedup_vs_baseline = 0;  // 0 when no baseline is known
  Protocol trials;
  std::string reason;  // rejection or failure detail

  nlohmann::ordered_json to_json() const;
};

/// Space definition file: {name, arch, tiles, stages | clusters, schedules}.
/// A tile entry is either [M,N,K] (crossed with the shared stage list) or
/// {"tile":[M,N,K],"stages":[...]} carrying its own stages.
struct SpaceDef {
  std::string name;
  Arch arch = Arch::SM80;
  std::vector<std::pair<Tile, std::vector<int>>> tiles;  // stages per tile (SM80)
  std::vector<Cluster> clusters;
  std::vector<Schedule> schedules;
};

SpaceDef parse_space(const nlohmann::json& j);
/// Looks up `<data>/spaces/<name>.json`, or treats `name` as a path if it
/// ends in ".json".
SpaceDef load_space(const std::string& name);

/// Warp tile for an SM80 threadblock tile: half of M and N, full K, clipped
/// into the profile's warp catalog.
Tile derive_warp_tile(const Tile& tb, const ArchProfile& profile);

std::vector<TuneConfig> enumerate_space(const ArchProfile& profile, const GemmProblem& problem,
                                        const std::string& space_name);
std::vector<TuneConfig> enumerate_space(const ArchProfile& profile, const SpaceDef& space);

struct Validation {
  bool ok = true;
  std::string reason;  // "smem: ...", "threads: ...", "shape: ..."
};

/// Shared-memory bytes the config needs under the documented model.
std::int64_t smem_bytes(const TuneConfig& c, const GemmProblem& p);
Validation validate_config(const TuneConfig& c, const ArchProfile& profile, const GemmProblem& p);

/// Shipped space used for a rule on an arch, if any.
std::optional<std::string> default_space(RuleTag rule, Arch arch);

/// Ok result with minimal mean_ms (first in order on ties). Nothing means
/// no viable config.
std::optional<TuneResult> select_best(const std::vector<TuneResult>& results);

double efficiency(double tflops, const ArchProfile& profile, DType dtype);
double efficiency(const TuneResult& r, const ArchProfile& profile, DType dtype);

/// TFLOP/s for a problem run in `ms` milliseconds.
double tflops_of(const GemmProblem& p, double ms);

}  // namespace ksynth
