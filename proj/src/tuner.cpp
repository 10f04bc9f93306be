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

#include "ksynth/tuner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>

#include "ksynth/examples_index.hpp"

namespace ksynth {
namespace {

ArchProfile make_sm80() {
  ArchProfile p;
  p.arch = Arch::SM80;
  p.smem_capacity_bytes = 163840;
  p.peak_tflops = {{DType::fp32, 19.5}, {DType::tf32, 156.0}, {DType::fp16, 312.0}, {DType::bf16, 312.0}};
  p.tile_catalog = {{64, 64, 16},   {64, 64, 64},   {64, 128, 16},  {64, 128, 32},  {64, 256, 32},
                    {128, 64, 16},  {128, 64, 32},  {128, 128, 16}, {128, 128, 32}, {128, 256, 16},
                    {128, 256, 32}, {256, 64, 32},  {256, 128, 16}, {256, 128, 32}};
  p.warp_catalog = {{32, 32, 0}, {32, 64, 0}, {64, 32, 0}, {64, 64, 0}};
  return p;
}

ArchProfile make_sm90() {
  ArchProfile p;
  p.arch = Arch::SM90;
  p.smem_capacity_bytes = 229376;
  p.peak_tflops = {{DType::fp32, 67.0}, {DType::tf32, 989.0}, {DType::fp16, 1979.0}, {DType::bf16, 1979.0}};
  p.tile_catalog = {{64, 128, 64}, {128, 128, 64}, {128, 256, 64}, {256, 128, 64}};
  p.cluster_catalog = {{1, 1, 1}, {1, 2, 1}, {1, 4, 1}, {2, 1, 1}, {2, 2, 1}, {4, 1, 1}};
  p.schedules = {Schedule::cooperative, Schedule::pingpong};
  return p;
}

Tile tile_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("tile must be [M,N,K]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

Schedule schedule_from(const std::string& s) {
  if (s == "cooperative" || s == "coop") return Schedule::cooperative;
  if (s == "pingpong" || s == "pp") return Schedule::pingpong;
  throw ValidationError("unknown schedule '" + s + "'");
}

GridSchedule grid_from(const std::string& s) {
  for (GridSchedule g : {GridSchedule::data_parallel, GridSchedule::batched, GridSchedule::stream_k,
                         GridSchedule::split_k}) {
    if (to_string(g) == s) return g;
  }
  throw ValidationError("unknown grid_schedule '" + s + "'");
}

}  // namespace

std::string_view to_string(Schedule s) { return s == Schedule::cooperative ? "cooperative" : "pingpong"; }

std::string_view to_string(GridSchedule s) {
  switch (s) {
    case GridSchedule::data_parallel: return "data_parallel";
    case GridSchedule::batched: return "batched";
    case GridSchedule::stream_k: return "stream_k";
    case GridSchedule::split_k: return "split_k";
  }
  return "?";
}

std::string_view to_string(TuneStatus s) {
  switch (s) {
    case TuneStatus::ok: return "ok";
    case TuneStatus::launch_failure: return "launch_failure";
    case TuneStatus::invalid: return "invalid";
  }
  return "?";
}

double ArchProfile::peak(DType t) const {
  const auto it = peak_tflops.find(t);
  if (it == peak_tflops.end()) throw ValidationError("no peak for dtype " + std::string(to_string(t)));
  return it->second;
}

const ArchProfile& arch_profile(Arch arch) {
  static const ArchProfile sm80 = make_sm80();
  static const ArchProfile sm90 = make_sm90();
  return arch == Arch::SM80 ? sm80 : sm90;
}

std::string TuneConfig::slug() const {
  std::string s = "tb" + std::to_string(tb_tile[0]) + "x" + std::to_string(tb_tile[1]) + "x" + std::to_string(tb_tile[2]);
  if (arch == Arch::SM80) return s + "-s" + std::to_string(stages);
  s += "-c" + std::to_string(cluster[0]) + "x" + std::to_string(cluster[1]) + "x" + std::to_string(cluster[2]);
  return s + (schedule == Schedule::cooperative ? "-coop" : "-pp");
}

nlohmann::ordered_json TuneConfig::to_json() const {
  nlohmann::ordered_json j;
  j["arch"] = std::string(to_string(arch));
  j["tb_tile"] = tb_tile;
  if (arch == Arch::SM80) {
    j["warp_tile"] = warp_tile;
    j["stages"] = stages;
  } else {
    j["cluster"] = cluster;
    j["schedule"] = std::string(to_string(schedule));
  }
  return j;
}

TuneConfig TuneConfig::from_json(const nlohmann::json& j) {
  try {
    TuneConfig c;
    c.arch = arch_or_throw(j.at("arch").get<std::string>());
    c.tb_tile = tile_from(j.at("tb_tile"));
    if (c.arch == Arch::SM80) {
      c.stages = j.at("stages").get<int>();
      c.warp_tile = j.contains("warp_tile") ? tile_from(j["warp_tile"]) : derive_warp_tile(c.tb_tile, arch_profile(c.arch));
    } else {
      c.cluster = tile_from(j.at("cluster"));
      c.schedule = schedule_from(j.at("schedule").get<std::string>());
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tune config: ") + e.what());
  }
}

TuneConfig parse_slug(const std::string& slug) {
  static const std::regex sm80(R"(tb(\d+)x(\d+)x(\d+)-s(\d+))");
  static const std::regex sm90(R"(tb(\d+)x(\d+)x(\d+)-c(\d+)x(\d+)x(\d+)-(coop|pp))");
  std::smatch m;
  TuneConfig c;
  if (std::regex_match(slug, m, sm80)) {
    c.arch = Arch::SM80;
    c.tb_tile = {std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3])};
    c.stages = std::stoi(m[4]);
    c.warp_tile = derive_warp_tile(c.tb_tile, arch_profile(Arch::SM80));
    return c;
  }
  if (std::regex_match(slug, m, sm90)) {
    c.arch = Arch::SM90;
    c.tb_tile = {std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3])};
    c.cluster = {std::stoi(m[4]), std::stoi(m[5]), std::stoi(m[6])};
    c.schedule = schedule_from(m[7]);
    return c;
  }
  throw ValidationError("malformed config slug '" + slug + "'");
}

nlohmann::ordered_json GemmProblem::to_json() const {
  nlohmann::ordered_json j;
  j["M"] = M;
  j["N"] = N;
  j["K"] = K;
  j["batch"] = batch;
  j["dtype_in"] = std::string(to_string(dtype_in));
  j["dtype_acc"] = std::string(to_string(dtype_acc));
  j["dtype_out"] = std::string(to_string(dtype_out));
  j["grid_schedule"] = std::string(to_string(grid_schedule));
  return j;
}

GemmProblem GemmProblem::from_json(const nlohmann::json& j) {
  try {
    GemmProblem p;
    p.M = j.at("M").get<std::int64_t>();
    p.N = j.at("N").get<std::int64_t>();
    p.K = j.at("K").get<std::int64_t>();
    p.batch = j.value("batch", std::int64_t{1});
    p.dtype_in = dtype_or_throw(j.at("dtype_in").get<std::string>());
    p.dtype_acc = dtype_or_throw(j.value("dtype_acc", std::string("fp32")));
    p.dtype_out = dtype_or_throw(j.value("dtype_out", std::string("fp32")));
    p.grid_schedule = grid_from(j.value("grid_schedule", std::string("data_parallel")));
    if (p.M < 1 || p.N < 1 || p.K < 1 || p.batch < 1) throw ValidationError("gemm problem: dims must be positive");
    if (p.batch > 1 && p.grid_schedule != GridSchedule::batched) {
      throw ValidationError("gemm problem: batch > 1 requires grid_schedule batched");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("gemm problem: ") + e.what());
  }
}

nlohmann::ordered_json TuneResult::to_json() const {
  nlohmann::ordered_json j;
  j["config"] = config.slug();
  j["status"] = std::string(to_string(status));
  if (status == TuneStatus::ok) {
    j["mean_ms"] = mean_ms;
    j["tflops"] = tflops;
    if (speedup_vs_baseline > 0) j["speedup_vs_baseline"] = speedup_vs_baseline;
    j["trials"] = {{"warmup", trials.warmup}, {"timed", trials.timed}};
  }
  if (!reason.empty()) j["reason"] = reason;
  return j;
}

SpaceDef parse_space(const nlohmann::json& j) {
  try {
    SpaceDef s;
    s.name = j.at("name").get<std::string>();
    s.arch = arch_or_throw(j.at("arch").get<std::string>());
    std::vector<int> shared;
    if (j.contains("stages")) shared = j["stages"].get<std::vector<int>>();
    for (const auto& t : j.at("tiles")) {
      if (t.is_object()) {
        s.tiles.emplace_back(tile_from(t.at("tile")), t.value("stages", shared));
      } else {
        s.tiles.emplace_back(tile_from(t), shared);
      }
    }
    if (j.contains("clusters")) {
      for (const auto& c : j["clusters"]) s.clusters.push_back(tile_from(c));
    }
    if (j.contains("schedules")) {
      for (const auto& c : j["schedules"]) s.schedules.push_back(schedule_from(c.get<std::string>()));
    }
    if (s.tiles.empty()) throw ValidationError("space '" + s.name + "': empty tile catalog");
    if (s.arch == Arch::SM80) {
      for (const auto& [tile, stages] : s.tiles) {
        if (stages.empty()) throw ValidationError("space '" + s.name + "': tile without stages");
      }
    } else if (s.clusters.empty() || s.schedules.empty()) {
      throw ValidationError("space '" + s.name + "': SM90 spaces need clusters and schedules");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("space definition: ") + e.what());
  }
}

SpaceDef load_space(const std::string& name) {
  const bool is_path = name.size() > 5 && name.substr(name.size() - 5) == ".json";
  const std::filesystem::path path = is_path ? std::filesystem::path(name)
                                                  : std::filesystem::path(data_dir()) / "spaces" / (name + ".json");
  std::ifstream in(path);
  if (!in) throw ValidationError("unknown space '" + name + "' (no " + path.string() + ")");
  try {
    return parse_space(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("space '" + name + "': " + e.what());
  }
}

Tile derive_warp_tile(const Tile& tb, const ArchProfile& profile) {
  int m = tb[0] / 2, n = tb[1] / 2;
  if (!profile.warp_catalog.empty()) {
    int lo_m = profile.warp_catalog[0][0], hi_m = lo_m, lo_n = profile.warp_catalog[0][1], hi_n = lo_n;
    for (const auto& w : profile.warp_catalog) {
      lo_m = std::min(lo_m, w[0]);
      hi_m = std::max(hi_m, w[0]);
      lo_n = std::min(lo_n, w[1]);
      hi_n = std::max(hi_n, w[1]);
    }
    m = std::clamp(m, lo_m, hi_m);
    n = std::clamp(n, lo_n, hi_n);
  }
  return {m, n, tb[2]};
}

std::vector<TuneConfig> enumerate_space(const ArchProfile& profile, const SpaceDef& space) {
  if (space.arch != profile.arch) {
    throw ValidationError("space '" + space.name + "' targets " + std::string(to_string(space.arch)) + ", profile is " +
                          std::string(to_string(profile.arch)));
  }
  std::vector<TuneConfig> out;
  for (const auto& [tile, stages] : space.tiles) {
    if (space.arch == Arch::SM80) {
      for (int s : stages) {
        TuneConfig c;
        c.arch = Arch::SM80;
        c.tb_tile = tile;
        c.warp_tile = derive_warp_tile(tile, profile);
        c.stages = s;
        out.push_back(c);
      }
    } else {
      for (const auto& cl : space.clusters) {
        for (Schedule sch : space.schedules) {
          TuneConfig c;
          c.arch = Arch::SM90;
          c.tb_tile = tile;
          c.cluster = cl;
          c.schedule = sch;
          out.push_back(c);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<TuneConfig> enumerate_space(const ArchProfile& profile, const GemmProblem&, const std::string& space_name) {
  return enumerate_space(profile, load_space(space_name));
}

std::int64_t smem_bytes(const TuneConfig& c, const GemmProblem& p) {
  const std::int64_t mt = c.tb_tile[0], nt = c.tb_tile[1], kt = c.tb_tile[2];
  const std::int64_t operands = (mt * kt + kt * nt) * static_cast<std::int64_t>(byte_width(p.dtype_in));
  if (c.arch == Arch::SM80) return c.stages * operands;
  return 2 * operands + mt * nt * static_cast<std::int64_t>(byte_width(p.dtype_out));
}

Validation validate_config(const TuneConfig& c, const ArchProfile& profile, const GemmProblem& p) {
  if (c.arch != profile.arch) return {false, "arch: config is " + std::string(to_string(c.arch))};
  for (int d : c.tb_tile) {
    if (d <= 0 || d % 16 != 0) return {false, "shape: tile dims must be positive multiples of 16"};
  }
  if (c.arch == Arch::SM80 && c.stages < 2) return {false, "shape: stages must be >= 2"};
  if (c.arch == Arch::SM90) {
    for (int d : c.cluster) {
      if (d != 1 && d != 2 && d != 4) return {false, "shape: cluster dims must be 1, 2 or 4"};
    }
  }
  const std::int64_t bytes = smem_bytes(c, p);
  if (bytes > profile.smem_capacity_bytes) {
    return {false, "smem: " + std::to_string(bytes) + " B > " + std::to_string(profile.smem_capacity_bytes) + " B"};
  }
  const std::int64_t threads = 128LL * std::max(1, c.tb_tile[0] / 64) * std::max(1, c.tb_tile[1] / 64);
  if (threads > profile.max_threads) {
    return {false, "threads: " + std::to_string(threads) + " > " + std::to_string(profile.max_threads)};
  }
  return {};
}

std::optional<std::string> default_space(RuleTag rule, Arch arch) {
  switch (rule) {
    case RuleTag::GEMM: return arch == Arch::SM80 ? "sm80-square-gemm" : "sm90-gemm";
    case RuleTag::BatchedGEMM: return arch == Arch::SM80 ? "sm80-batched" : "sm90-gemm";
    case RuleTag::GEMM_StreamK: return arch == Arch::SM80 ? "sm80-streamk" : "sm90-streamk";
    default: return std::nullopt;
  }
}

std::optional<TuneResult> select_best(const std::vector<TuneResult>& results) {
  const TuneResult* best = nullptr;
  for (const auto& r : results) {
    if (r.status != TuneStatus::ok) continue;
    if (!best || r.mean_ms < best->mean_ms) best = &r;
  }
  if (!best) return std::nullopt;
  return *best;
}

double efficiency(double tflops, const ArchProfile& profile, DType dtype) { return tflops / profile.peak(dtype); }

double efficiency(const TuneResult& r, const ArchProfile& profile, DType dtype) {
  return r.status == TuneStatus::ok ? efficiency(r.tflops, profile, dtype) : 0.0;
}

double tflops_of(const GemmProblem& p, double ms) { return ms > 0 ? p.flops() / (ms * 1e9) : 0.0; }

}  // namespace ksynth
