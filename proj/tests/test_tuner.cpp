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

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ksynth/executor.hpp"
#include "ksynth/tuner.hpp"

using namespace ksynth;

namespace {

const ArchProfile& sm80() { return arch_profile(Arch::SM80); }
const ArchProfile& sm90() { return arch_profile(Arch::SM90); }

GemmProblem square(DType in) {
  GemmProblem p;
  p.M = p.N = p.K = 4096;
  p.dtype_in = in;
  return p;
}

TuneConfig ampere(Tile t, int stages) {
  TuneConfig c;
  c.arch = Arch::SM80;
  c.tb_tile = t;
  c.warp_tile = derive_warp_tile(t, sm80());
  c.stages = stages;
  return c;
}

TuneConfig hopper(Tile t, Cluster cl, Schedule s = Schedule::cooperative) {
  TuneConfig c;
  c.arch = Arch::SM90;
  c.tb_tile = t;
  c.cluster = cl;
  c.schedule = s;
  return c;
}

const std::string kFakeExecutor = std::string(KSYNTH_BINARY_DIR) + "/fake_executor";

}  // namespace

TEST_CASE("shipped spaces enumerate the expected sweep sizes") {
  CHECK(enumerate_space(sm80(), square(DType::tf32), "sm80-square-gemm").size() == 98);
  CHECK(enumerate_space(sm90(), square(DType::fp16), "sm90-gemm").size() == 48);
  CHECK(enumerate_space(sm90(), square(DType::fp16), "sm90-streamk").size() == 16);
  CHECK(enumerate_space(sm80(), square(DType::tf32), "sm80-batched").size() == 30);
  CHECK(enumerate_space(sm80(), square(DType::fp16), "sm80-streamk").size() == 29);
}

TEST_CASE("space enumeration equals the catalog product and is ordered") {
  for (const char* name : {"sm80-square-gemm", "sm80-batched", "sm80-streamk", "sm90-gemm", "sm90-streamk"}) {
    const SpaceDef def = load_space(name);
    std::size_t product = 0;
    for (const auto& [tile, stages] : def.tiles) {
      product += def.arch == Arch::SM80 ? stages.size() : def.clusters.size() * def.schedules.size();
    }
    const auto configs = enumerate_space(arch_profile(def.arch), def);
    CHECK(configs.size() == product);
    CHECK(std::is_sorted(configs.begin(), configs.end()));
    CHECK(std::adjacent_find(configs.begin(), configs.end()) == configs.end());
    for (const auto& c : configs) CHECK(parse_slug(c.slug()) == c);
  }
  const auto sq = enumerate_space(sm80(), load_space("sm80-square-gemm"));
  CHECK(sq.front().slug() == "tb64x64x16-s2");
  CHECK(sq.back().slug() == "tb256x128x32-s8");
  CHECK_THROWS_AS(load_space("no-such-space"), ValidationError);
  CHECK_THROWS_AS(parse_space(nlohmann::json::parse(R"({"name":"e","arch":"SM80","tiles":[],"stages":[2]})")),
                  ValidationError);
  CHECK_THROWS_AS(enumerate_space(sm90(), load_space("sm80-batched")), ValidationError);
}

TEST_CASE("config slugs follow the registry path format") {
  CHECK(ampere({128, 256, 32}, 3).slug() == "tb128x256x32-s3");
  CHECK(hopper({128, 256, 64}, {2, 1, 1}).slug() == "tb128x256x64-c2x1x1-coop");
  CHECK(hopper({128, 256, 64}, {2, 1, 1}, Schedule::pingpong).slug() == "tb128x256x64-c2x1x1-pp");
  CHECK_THROWS_AS(parse_slug("tb128x256-s3"), ValidationError);
  const auto c = ampere({128, 256, 32}, 3);
  CHECK(TuneConfig::from_json(nlohmann::json::parse(c.to_json().dump())) == c);
}

TEST_CASE("warp tiles halve the threadblock tile within the catalog") {
  CHECK(derive_warp_tile({128, 256, 32}, sm80()) == Tile{64, 64, 32});
  CHECK(derive_warp_tile({64, 64, 16}, sm80()) == Tile{32, 32, 16});
  CHECK(derive_warp_tile({256, 64, 32}, sm80()) == Tile{64, 32, 32});
}

TEST_CASE("shared-memory validator boundary cases") {
  const GemmProblem tf32 = square(DType::tf32);
  // 128*32 + 32*256 = 12288 elements per stage, 4 bytes each.
  CHECK(smem_bytes(ampere({128, 256, 32}, 1), tf32) == 49152);
  CHECK(smem_bytes(ampere({128, 256, 32}, 3), tf32) == 147456);
  CHECK(validate_config(ampere({128, 256, 32}, 3), sm80(), tf32).ok);
  CHECK(validate_config(ampere({128, 256, 32}, 2), sm80(), tf32).ok);
  CHECK(smem_bytes(ampere({128, 256, 32}, 4), tf32) == 196608);
  for (int s = 4; s <= 8; ++s) {
    const auto v = validate_config(ampere({128, 256, 32}, s), sm80(), tf32);
    CHECK_FALSE(v.ok);
    CHECK(v.reason.rfind("smem", 0) == 0);
  }
  GemmProblem fp16 = square(DType::fp16);
  fp16.dtype_out = DType::fp32;
  for (const Cluster& cl : sm90().cluster_catalog) {
    CHECK(smem_bytes(hopper({128, 256, 64}, cl), fp16) == 229376);
    CHECK(validate_config(hopper({128, 256, 64}, cl), sm90(), fp16).ok);
  }
  CHECK_FALSE(validate_config(hopper({128, 256, 128}, {1, 1, 1}), sm90(), fp16).ok);
  CHECK_FALSE(validate_config(hopper({256, 256, 64}, {1, 1, 1}), sm90(), fp16).ok);
  CHECK_FALSE(validate_config(hopper({128, 128, 64}, {3, 1, 1}), sm90(), fp16).ok);
  CHECK_FALSE(validate_config(ampere({128, 120, 32}, 3), sm80(), tf32).ok);
  CHECK_FALSE(validate_config(ampere({128, 128, 32}, 1), sm80(), tf32).ok);
  CHECK_FALSE(validate_config(ampere({128, 128, 32}, 3), sm90(), tf32).ok);
}

TEST_CASE("stage rejection is monotone for every catalog tile") {
  for (DType dt : {DType::tf32, DType::fp16}) {
    const GemmProblem p = square(dt);
    for (const Tile& t : sm80().tile_catalog) {
      bool rejected = false;
      for (int s = 2; s <= 16; ++s) {
        const bool ok = validate_config(ampere(t, s), sm80(), p).ok;
        if (rejected) CHECK_FALSE(ok);
        rejected = rejected || !ok;
      }
    }
  }
}

TEST_CASE("square-GEMM space splits into 66 feasible and 32 rejected") {
  const auto configs = enumerate_space(sm80(), load_space("sm80-square-gemm"));
  const auto feasible = std::count_if(configs.begin(), configs.end(), [](const TuneConfig& c) {
    return validate_config(c, sm80(), square(DType::tf32)).ok;
  });
  CHECK(feasible == 66);
  GemmProblem p6{256, 256, 524288, 1, DType::fp16, DType::fp32, DType::fp32, GridSchedule::stream_k};
  const auto sk = enumerate_space(sm80(), load_space("sm80-streamk"));
  CHECK(std::count_if(sk.begin(), sk.end(), [&](const TuneConfig& c) { return validate_config(c, sm80(), p6).ok; }) ==
        23);
}

TEST_CASE("rejected configs never reach the executor") {
  AnalyticExecutor exec(sm80());
  const auto results = sweep({ampere({128, 256, 32}, 3), ampere({128, 256, 32}, 4)}, sm80(), square(DType::tf32), exec);
  CHECK(exec.invocations() == 1);
  REQUIRE(results.size() == 2);
  CHECK(results[0].status == TuneStatus::ok);
  CHECK(results[1].status == TuneStatus::invalid);
  CHECK(results[1].mean_ms == 0);
  CHECK(results[1].tflops == 0);
  CHECK_FALSE(results[1].to_json().contains("mean_ms"));
}

TEST_CASE("analytic sweep is deterministic, ordered, and consistent") {
  const GemmProblem p = square(DType::tf32);
  const auto configs = enumerate_space(sm80(), load_space("sm80-square-gemm"));
  AnalyticExecutor a(sm80()), b(sm80());
  SweepOptions wide;
  wide.concurrency = 8;
  const auto serial = sweep(configs, sm80(), p, a);
  const auto parallel = sweep(configs, sm80(), p, b, wide);
  REQUIRE(serial.size() == configs.size());
  REQUIRE(parallel.size() == configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    CHECK(serial[i].config == configs[i]);
    CHECK(parallel[i].config == configs[i]);
    CHECK(serial[i].status == parallel[i].status);
    CHECK(serial[i].mean_ms == parallel[i].mean_ms);
    if (serial[i].status == TuneStatus::ok) {
      CHECK(serial[i].trials.warmup == 5);
      CHECK(serial[i].trials.timed == 20);
      CHECK(std::abs(serial[i].tflops * serial[i].mean_ms * 1e9 - p.flops()) <= 1e-6 * p.flops());
      CHECK(serial[i].tflops <= 0.85 * 156.0 + 1e-9);
    }
  }
  CHECK(a.invocations() == 66);
  const auto s = summarize(serial);
  CHECK(s.swept == 98);
  CHECK(s.valid == 66);
  CHECK(s.failed == 32);
  CHECK(s.swept == s.valid + s.failed);
}

TEST_CASE("analytic model prefers the 128x256 tile at three stages") {
  AnalyticExecutor exec(sm80());
  CHECK(exec.model_efficiency(ampere({128, 256, 32}, 3)) == doctest::Approx(0.85));
  CHECK(exec.model_efficiency(ampere({64, 64, 16}, 3)) < exec.model_efficiency(ampere({128, 128, 32}, 3)));
  CHECK(exec.model_efficiency(ampere({128, 128, 32}, 2)) < exec.model_efficiency(ampere({128, 128, 32}, 3)));
}

TEST_CASE("replay selection reproduces the six recorded best configurations") {
  struct Cell {
    const char* fixture;
    Arch arch;
    const char* best;
    double ms;  // 0: not recorded
    double speedup;
  };
  const Cell cells[] = {
      {"sm80-square-gemm", Arch::SM80, "tb128x256x32-s3", 0, 1.14},
      {"sm80-batched", Arch::SM80, "tb128x256x32-s3", 0, 1.18},
      {"sm80-streamk", Arch::SM80, "tb64x128x64-s4", 0, 1.06},
      {"sm90-square-gemm", Arch::SM90, "tb128x256x64-c2x1x1-coop", 0.195, 0.92},
      {"sm90-batched", Arch::SM90, "tb128x256x64-c1x1x1-coop", 0.476, 0.84},
      {"sm90-streamk", Arch::SM90, "tb128x128x64-c2x2x1-coop", 0.241, 1.80},
  };
  for (const auto& cell : cells) {
    CAPTURE(cell.fixture);
    ReplayExecutor exec(load_replay(cell.fixture));
    const auto& fx = exec.fixture();
    const auto& profile = arch_profile(cell.arch);
    const auto configs = enumerate_space(profile, load_space(fx.space));
    CHECK(fx.measurements.size() == configs.size());
    const auto results = sweep(configs, profile, fx.problem, exec);
    const auto best = select_best(results);
    REQUIRE(best.has_value());
    CHECK(best->config.slug() == cell.best);
    if (cell.ms > 0) CHECK(best->mean_ms == cell.ms);
    CHECK(std::abs(best->speedup_vs_baseline - cell.speedup) <= 0.005);
  }
}

TEST_CASE("replay TFLOPS and efficiency match the recorded figures") {
  const auto best_of = [](const char* name) {
    ReplayExecutor exec(load_replay(name));
    const auto& profile = arch_profile(exec.fixture().arch);
    return *select_best(
        sweep(enumerate_space(profile, load_space(exec.fixture().space)), profile, exec.fixture().problem, exec));
  };
  const auto p1 = best_of("sm80-square-gemm");
  const auto p3 = best_of("sm80-batched");
  CHECK(p1.tflops == doctest::Approx(124.4).epsilon(0.0004));
  CHECK(p3.tflops == doctest::Approx(114.4).epsilon(0.0004));
  CHECK(std::abs(efficiency(p1, sm80(), DType::tf32) - 0.798) <= 0.001);
  CHECK(std::abs(efficiency(p3, sm80(), DType::tf32) - 0.733) <= 0.001);
  CHECK(std::abs(efficiency(best_of("sm90-square-gemm"), sm90(), DType::fp16) - 0.356) <= 0.001);
  CHECK(std::abs(efficiency(best_of("sm90-streamk"), sm90(), DType::fp16) - 0.144) <= 0.001);
}

TEST_CASE("efficiency arithmetic on the recorded throughputs") {
  CHECK(std::abs(efficiency(124.4, sm80(), DType::tf32) - 0.798) <= 0.001);
  CHECK(std::abs(efficiency(114.4, sm80(), DType::tf32) - 0.733) <= 0.001);
  CHECK(std::abs(efficiency(705.0, sm90(), DType::fp16) - 0.356) <= 0.001);
  CHECK(std::abs(efficiency(284.8, sm90(), DType::fp16) - 0.144) <= 0.001);
  CHECK(efficiency(0.0, sm80(), DType::tf32) == 0.0);
  CHECK(sm80().peak(DType::fp16) == 312.0);
  CHECK(sm90().peak(DType::tf32) == 989.0);
}

TEST_CASE("select_best handles ties and the no-viable-config outcome") {
  std::vector<TuneResult> rs(3);
  rs[0].status = rs[1].status = rs[2].status = TuneStatus::launch_failure;
  CHECK_FALSE(select_best(rs).has_value());
  rs[1].status = rs[2].status = TuneStatus::ok;
  rs[1].mean_ms = rs[2].mean_ms = 1.0;
  rs[1].config = ampere({64, 64, 16}, 2);
  rs[2].config = ampere({64, 64, 16}, 3);
  CHECK(select_best(rs)->config.stages == 2);
}

TEST_CASE("replay without a recording for a config is a launch failure") {
  ReplayExecutor exec(load_replay("sm80-batched"));
  const auto rs = sweep({ampere({64, 64, 16}, 5)}, sm80(), exec.fixture().problem, exec);
  CHECK(rs[0].status == TuneStatus::launch_failure);
  CHECK(rs[0].reason.find("no recorded") != std::string::npos);
}

TEST_CASE("external executor speaks the line protocol") {
  ExternalExecutor exec(kFakeExecutor);
  CHECK_FALSE(exec.concurrent_safe());
  const GemmProblem p = square(DType::tf32);
  SweepOptions opts;
  opts.concurrency = 4;  // ignored: external executors run serially
  opts.baseline_ms = 2.0;
  const auto rs = sweep({ampere({64, 64, 16}, 3), ampere({64, 64, 16}, 8), ampere({128, 256, 32}, 4)}, sm80(), p, exec, opts);
  CHECK(rs[0].status == TuneStatus::ok);
  CHECK(rs[0].tflops == doctest::Approx(100.0));
  CHECK(rs[0].speedup_vs_baseline == doctest::Approx(2.0 / rs[0].mean_ms));
  CHECK(rs[1].status == TuneStatus::launch_failure);
  CHECK(rs[1].reason.find("launch") != std::string::npos);
  CHECK(rs[2].status == TuneStatus::invalid);
  CHECK(exec.invocations() == 2);
  CHECK_NOTHROW(exec.finish());
}

TEST_CASE("external executor protocol violations are harness errors") {
  const GemmProblem p = square(DType::tf32);
  for (const char* mode : {"garble", "die"}) {
    ExternalExecutor exec(kFakeExecutor, std::chrono::seconds(10));
    SweepOptions opts;
    opts.kernel_path = mode;
    CHECK_THROWS_AS(sweep({ampere({64, 64, 16}, 3)}, sm80(), p, exec, opts), HarnessError);
  }
  ExternalExecutor exec(kFakeExecutor);
  SweepOptions opts;
  opts.kernel_path = "fail-exit";
  CHECK(sweep({ampere({64, 64, 16}, 3)}, sm80(), p, exec, opts)[0].status == TuneStatus::ok);
  CHECK_THROWS_AS(exec.finish(), HarnessError);
  ExternalExecutor missing("/nonexistent/executor", std::chrono::seconds(5));
  CHECK_THROWS_AS(sweep({ampere({64, 64, 16}, 3)}, sm80(), p, missing), HarnessError);
}

TEST_CASE("executor choice parsing") {
  CHECK(make_executor("analytic", Arch::SM80)->name() == "analytic");
  CHECK(make_executor("replay:sm90-streamk", Arch::SM90)->name() == "replay:sm90-streamk");
  CHECK_THROWS_AS(make_executor("replay:sm90-streamk", Arch::SM80), ValidationError);
  CHECK_THROWS_AS(make_executor("gpu", Arch::SM80), ValidationError);
  CHECK(default_space(RuleTag::GEMM_StreamK, Arch::SM80) == std::optional<std::string>("sm80-streamk"));
  CHECK_FALSE(default_space(RuleTag::FMHA, Arch::SM90).has_value());
}
