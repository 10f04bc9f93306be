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

// Acceptance checks: one PASS/FAIL line per criterion, exit 0 when all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fused_equivalence.hpp"
#include "golden_cases.hpp"
#include "ksynth/composer.hpp"
#include "ksynth/executor.hpp"
#include "ksynth/examples_index.hpp"
#include "ksynth/hash.hpp"
#include "ksynth/interpreter.hpp"
#include "ksynth/pipeline.hpp"
#include "ksynth/precision.hpp"
#include "ksynth/tuner.hpp"
#include "registry_property.hpp"

using namespace ksynth;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed expectations; the first few end up in the detail line.
struct Checker {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Outcome done(const std::string& summary) const {
    if (failures.empty()) return {true, summary};
    std::string d = failures.front();
    if (failures.size() > 1) d += fmt::format(" (+{} more)", failures.size() - 1);
    return {false, d};
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string data() { return data_dir(); }
std::string trace_path(const std::string& name) { return data() + "/traces/" + name + ".json"; }

std::vector<CallSite> sites_for(const CompGraph& g) {
  std::vector<CallSite> out;
  for (const auto& p : propose_patterns(g, Arch::SM80)) out.push_back(call_site(p, ""));
  return out;
}

Outcome discovery_fidelity() {
  Checker c;
  const std::pair<const char*, std::set<std::string>> cases[] = {
      {"minigpt_block", {"FMHA", "MLP_GELU"}},
      {"llama3_block", {"FMHA_GQA", "MLP_SwiGLU"}},
  };
  std::vector<std::string> times;
  for (const auto& [block, want] : cases) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_discover(trace_path(block), RunConfig{});
    const double secs = seconds_since(t0);
    std::set<std::string> got;
    for (const auto& p : r.document["proposals"]) got.insert(p["rule"].get<std::string>());
    c.expect(r.exit_code == kExitOk, fmt::format("{}: exit {}", block, r.exit_code));
    c.expect(r.proposals == 2, fmt::format("{}: {} proposals", block, r.proposals));
    c.expect(got == want, fmt::format("{}: rules {}", block, fmt::join(got, ",")));
    c.expect(secs < 1.0, fmt::format("{}: {:.3f} s", block, secs));
    times.push_back(fmt::format("{} {:.3f}s", block, secs));
  }
  return c.done(fmt::format("{{FMHA, MLP_GELU}} and {{FMHA_GQA, MLP_SwiGLU}}; {}", fmt::join(times, ", ")));
}

Outcome space_counts() {
  Checker c;
  const std::pair<const char*, std::size_t> cases[] = {
      {"sm80-square-gemm", 98}, {"sm90-gemm", 48}, {"sm90-streamk", 16}, {"sm80-batched", 30}, {"sm80-streamk", 29}};
  std::vector<std::string> got;
  for (const auto& [name, want] : cases) {
    const SpaceDef def = load_space(name);
    const std::size_t n = enumerate_space(arch_profile(def.arch), def).size();
    c.expect(n == want, fmt::format("{}: {} configs, want {}", name, n, want));
    got.push_back(fmt::format("{}={}", name, n));
  }
  return c.done(fmt::format("{}", fmt::join(got, " ")));
}

Outcome validator_boundary() {
  Checker c;
  const ArchProfile& a = arch_profile(Arch::SM80);
  GemmProblem tf32;
  tf32.M = tf32.N = tf32.K = 4096;
  tf32.dtype_in = DType::tf32;
  auto cfg = [&](Tile t, int stages) {
    TuneConfig k;
    k.arch = Arch::SM80;
    k.tb_tile = t;
    k.warp_tile = derive_warp_tile(t, a);
    k.stages = stages;
    return k;
  };
  const std::int64_t per_stage = smem_bytes(cfg({128, 256, 32}, 1), tf32);
  c.expect(per_stage == 49152, fmt::format("per-stage smem {}", per_stage));
  c.expect(a.smem_capacity_bytes == 163840, fmt::format("capacity {}", a.smem_capacity_bytes));
  for (int s = a.min_stages; s <= a.max_stages; ++s) {
    const bool ok = validate_config(cfg({128, 256, 32}, s), a, tf32).ok;
    c.expect(ok == (s <= 3), fmt::format("stages {} {}", s, ok ? "accepted" : "rejected"));
  }
  std::size_t tiles = 0;
  for (DType dt : {DType::tf32, DType::fp16}) {
    GemmProblem p = tf32;
    p.dtype_in = dt;
    for (const Tile& t : a.tile_catalog) {
      bool rejected = false;
      for (int s = 2; s <= 16; ++s) {
        const bool ok = validate_config(cfg(t, s), a, p).ok;
        c.expect(!(rejected && ok), fmt::format("non-monotone at {}x{}x{} s{}", t[0], t[1], t[2], s));
        rejected = rejected || !ok;
      }
      ++tiles;
    }
  }
  return c.done(fmt::format("49,152 B/stage vs 163,840 B: s<=3 accepted, s>=4 rejected; monotone over {} tile/dtype pairs",
                            tiles));
}

TuneResult replay_best(const std::string& fixture) {
  ReplayExecutor exec(load_replay(fixture));
  const auto& fx = exec.fixture();
  const auto& profile = arch_profile(fx.arch);
  const auto best = select_best(sweep(enumerate_space(profile, load_space(fx.space)), profile, fx.problem, exec));
  if (!best) throw std::runtime_error("no viable config in " + fixture);
  return *best;
}

Outcome replay_selection() {
  Checker c;
  const std::tuple<const char*, const char*, double> cells[] = {
      {"sm80-square-gemm", "tb128x256x32-s3", 1.14},          {"sm80-batched", "tb128x256x32-s3", 1.18},
      {"sm80-streamk", "tb64x128x64-s4", 1.06},                {"sm90-square-gemm", "tb128x256x64-c2x1x1-coop", 0.92},
      {"sm90-batched", "tb128x256x64-c1x1x1-coop", 0.84},     {"sm90-streamk", "tb128x128x64-c2x2x1-coop", 1.80},
  };
  std::vector<std::string> got;
  for (const auto& [fixture, slug, speedup] : cells) {
    const auto best = replay_best(fixture);
    c.expect(best.config.slug() == slug, fmt::format("{}: best {}", fixture, best.config.slug()));
    c.expect(std::abs(best.speedup_vs_baseline - speedup) <= 0.005,
             fmt::format("{}: speedup {:.4f}", fixture, best.speedup_vs_baseline));
    got.push_back(fmt::format("{}/{:.2f}x", best.config.slug(), best.speedup_vs_baseline));
  }
  return c.done(fmt::format("{}", fmt::join(got, ", ")));
}

Outcome efficiency_arithmetic() {
  Checker c;
  const std::tuple<double, Arch, DType, double> cells[] = {{124.4, Arch::SM80, DType::tf32, 0.798},
                                                           {114.4, Arch::SM80, DType::tf32, 0.733},
                                                           {705.0, Arch::SM90, DType::fp16, 0.356},
                                                           {284.8, Arch::SM90, DType::fp16, 0.144}};
  std::vector<std::string> got;
  for (const auto& [tflops, arch, dt, want] : cells) {
    const double e = efficiency(tflops, arch_profile(arch), dt);
    c.expect(std::abs(e - want) <= 0.001, fmt::format("{}: {:.4f}, want {}", tflops, e, want));
    got.push_back(fmt::format("{:.4f}", e));
  }
  // The same figures through the replayed sweeps.
  const std::tuple<const char*, DType, double> replayed[] = {{"sm80-square-gemm", DType::tf32, 0.798},
                                                            {"sm80-batched", DType::tf32, 0.733},
                                                            {"sm90-square-gemm", DType::fp16, 0.356},
                                                            {"sm90-streamk", DType::fp16, 0.144}};
  for (const auto& [fixture, dt, want] : replayed) {
    const auto best = replay_best(fixture);
    const double e = efficiency(best, arch_profile(best.config.arch), dt);
    c.expect(std::abs(e - want) <= 0.001, fmt::format("{} replay: {:.4f}", fixture, e));
  }
  return c.done(fmt::format("{}", fmt::join(got, ", ")));
}

Outcome composition_equivalence() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t trials = 0;
  double worst = 0;
  const ToleranceSpec tol{1e-3, 1e-5};
  for (const char* block : {"minigpt_block", "llama3_block"}) {
    const CompGraph g = load_trace_file(trace_path(block));
    const CompGraph rw = rewrite(g, sites_for(g));
    c.expect(!g.desk_dims.empty(), fmt::format("{}: no desk dims", block));
    for (const auto& dims : g.desk_dims) {
      for (std::uint64_t seed = 42; seed < 62; ++seed) {
        const auto r = verify_composed(g, rw, dims, tol, seed);
        ++trials;
        for (const auto& o : r.outputs) worst = std::max(worst, o.close.max_abs_diff);
        c.expect(r.pass, fmt::format("{} seed {} dims {}", block, seed, nlohmann::json(dims).dump()));
      }
    }
  }
  std::size_t mutations = 0;
  for (const auto& f : load_mutation_fixtures()) {
    const CompGraph g = load_trace_file(trace_path(f.trace));
    CompGraph rw = rewrite(g, sites_for(g));
    c.expect(inject_mutation(rw, f.rule, f.mutation) == 1, f.name + ": not injected");
    c.expect(!verify_composed(g, rw, g.desk_dims.at(0), tol).pass, f.name + ": not detected");
    ++mutations;
  }
  c.expect(mutations >= 5, fmt::format("only {} mutation fixtures", mutations));
  const double secs = seconds_since(t0);
  c.expect(secs < 30.0, fmt::format("{:.1f} s", secs));
  return c.done(fmt::format("{} trials pass (worst output diff {:.2g}); {}/{} mutations fail; {:.1f} s", trials, worst,
                            mutations, mutations, secs));
}

Outcome ablation_fidelity() {
  Checker c;
  const std::tuple<const char*, std::vector<double>, std::vector<std::string>> cases[] = {
      {"minigpt_block", {1.27, 1.44, 2.03}, {"13.573", "13.907"}},
      {"llama3_block", {1.22, 1.12, 1.41}, {"115.741", "114.133"}},
  };
  std::vector<std::string> got;
  for (const auto& [block, speedups, compiler_ms] : cases) {
    const CompGraph g = load_trace_file(trace_path(block));
    const auto report = bench_report(ablate(g, sites_for(g)), BlockTimings::load(block_replay_path(block)));
    c.expect(report.variants.size() == 4, fmt::format("{}: {} variants", block, report.variants.size()));
    if (report.variants.size() != 4) continue;
    std::vector<std::string> row;
    for (std::size_t i = 0; i < 3; ++i) {
      const double s = round_half_up(report.variants[i + 1].speedup, 2);
      c.expect(s == speedups[i], fmt::format("{} {}: {}", block, report.variants[i + 1].label, s));
      row.push_back(fmt::format("{:.2f}", s));
    }
    const auto j = report.to_json();
    const std::string md = report.to_markdown();
    for (std::size_t i = 0; i < compiler_ms.size(); ++i) {
      c.expect(j["compiler_baselines"].size() > i && j["compiler_baselines"][i]["mean_ms"].dump() == compiler_ms[i],
               fmt::format("{}: compiler row {}", block, i));
      c.expect(md.find("| " + compiler_ms[i] + " |") != std::string::npos,
               fmt::format("{}: {} ms not echoed", block, compiler_ms[i]));
    }
    got.push_back(fmt::format("{} {{{}}} + {}/{} ms", block, fmt::join(row, ", "), compiler_ms[0], compiler_ms[1]));
  }
  return c.done(fmt::format("{}", fmt::join(got, "; ")));
}

Outcome registry_laws() {
  const fs::path scratch = testing::make_temp_dir("ksynth-acceptance-");
  const auto r = testing::registry_property_suite(42, 120, scratch);
  fs::remove_all(scratch);
  Checker c;
  c.expect(r.cases >= 100, fmt::format("{} cases", r.cases));
  for (const auto& f : r.failures) c.expect(false, f);
  return c.done(fmt::format("{} cases, {} operations, seed 42", r.cases, r.operations));
}

Outcome interpreter_equivalence() {
  Checker c;
  std::vector<std::string> got;
  for (RuleTag rule : {RuleTag::FMHA, RuleTag::FMHA_GQA, RuleTag::MLP_GELU, RuleTag::MLP_SwiGLU}) {
    const auto r = testing::fused_equivalence(rule, data(), 20, 42, 1e-9);
    for (const auto& f : r.failures) c.expect(false, std::string(to_string(rule)) + " " + f);
    c.expect(r.instances == 20, fmt::format("{}: {} instances", to_string(rule), r.instances));
    got.push_back(fmt::format("{} {:.1e}", to_string(rule), r.worst_abs_diff));
  }
  // Softmax rows sum to one; the activations fix zero.
  TensorValue x = random_tensor(TensorMeta{{4, 33}, DType::fp32}, 42, 7, 30.0);
  const TensorValue p = softmax_last(x);
  for (int row = 0; row < 4; ++row) {
    double s = 0;
    for (int col = 0; col < 33; ++col) s += p.data[static_cast<std::size_t>(row * 33 + col)];
    c.expect(std::abs(s - 1.0) < 1e-12, fmt::format("softmax row {} sums to {:.17g}", row, s));
  }
  c.expect(gelu_tanh(0.0) == 0.0, "GELU(0) != 0");
  c.expect(silu(0.0) == 0.0, "SiLU(0) != 0");
  return c.done("20 instances per rule, worst |fused - unfused|: " + fmt::format("{}", fmt::join(got, ", ")));
}

Outcome overflow_mechanism() {
  Checker c;
  const std::size_t k = std::size_t{1} << 20;
  std::vector<double> a(k), b(k);
  CounterRng ra(42, 1), rb(42, 2);
  for (std::size_t i = 0; i < k; ++i) {
    a[i] = 12.0 + 4.0 * ra.uniform(i);
    b[i] = 12.0 + 4.0 * rb.uniform(i);
  }
  const auto half = emulated_dot(a, b, DType::fp16, DType::fp16);
  const auto wide = emulated_dot(a, b, DType::fp16, DType::fp32);
  c.expect(half.overflow, "fp16 accumulation did not overflow");
  c.expect(!wide.overflow && std::isfinite(wide.value), "fp32 accumulation overflowed");
  c.expect(wide.value > 65504.0, "fp32 sum does not exceed the fp16 range");
  return c.done(fmt::format("K=2^20: fp16 accumulator inf after {} addends; fp32 accumulator {:.4g}", half.overflow_at,
                            wide.value));
}

KernelSpec mutated(KernelSpec s, const std::string& from, const std::string& to) {
  const auto pos = s.source_text.find(from);
  if (pos == std::string::npos) throw std::runtime_error("token not found: " + from);
  s.source_text.replace(pos, from.size(), to);
  s.content_hash = sha256_hex(s.source_text);
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Outcome codegen_determinism() {
  Checker c;
  const fs::path golden = fs::path(KSYNTH_SOURCE_DIR) / "tests" / "golden";
  for (const auto& gc : testing::kGolden) {
    ProposedPattern p;
    TuneConfig cfg;
    const auto spec = testing::emit_golden(data(), gc, &p, &cfg);
    const auto again = testing::emit_golden(data(), gc);
    const std::string cell = gc.fixture + "-" + std::string(to_string(gc.arch));
    const fs::path ref = golden / cell / spec.pattern_id / spec.config.slug();
    c.expect(slurp(ref / "kernel.cu") == spec.source_text, "golden kernel differs: " + ref.string());
    c.expect(slurp(ref / "wrapper.cpp") == spec.wrapper_text, "golden wrapper differs: " + ref.string());
    c.expect(again.source_text == spec.source_text, "emission not deterministic: " + cell);
    c.expect(structural_check(spec, p, cfg).ok(), "structural check rejects " + cell);
  }

  ProposedPattern p80, p90;
  TuneConfig c80, c90;
  const auto s80 = testing::emit_golden(data(), testing::kGolden[0], &p80, &c80);
  const auto s90 = testing::emit_golden(data(), testing::kGolden[1], &p90, &c90);
  c.expect(structural_check(mutated(s80, "cutlass::arch::Sm80", "cutlass::arch::Sm90"), p80, c80).has("arch mismatch"),
           "arch mutation missed");
  c.expect(structural_check(mutated(s90, "KernelTmaWarpSpecializedCooperative", "KernelTmaWarpSpecializedPingpong"),
                            p90, c90)
               .has("schedule mismatch"),
           "schedule mutation missed");
  c.expect(structural_check(mutated(s80, "thread::LinearCombination<", "thread::LinearCombinationGELU<"), p80, c80)
               .has("epilogue mismatch"),
           "epilogue mutation missed");

  for (const auto& gc : testing::kGolden) {
    if (gc.rule != RuleTag::FMHA_GQA) continue;
    const auto spec = testing::emit_golden(data(), gc);
    c.expect(spec.source_text.find("constexpr int kQueriesPerBlock = 32;") != std::string::npos &&
                 spec.source_text.find("constexpr int kKeysPerBlock = 128;") != std::string::npos,
             "GQA block sizes on " + std::string(to_string(gc.arch)));
  }
  return c.done(fmt::format("{} goldens byte-equal; arch/schedule/epilogue mutations caught; GQA 32/128",
                            testing::kGolden.size()));
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"discovery fidelity", discovery_fidelity},
      {"search-space counts", space_counts},
      {"validator boundary and monotonicity", validator_boundary},
      {"replay selection fidelity", replay_selection},
      {"efficiency arithmetic", efficiency_arithmetic},
      {"composition equivalence", composition_equivalence},
      {"ablation report fidelity", ablation_fidelity},
      {"registry laws", registry_laws},
      {"interpreter oracle equivalence", interpreter_equivalence},
      {"overflow mechanism", overflow_mechanism},
      {"codegen determinism and structure", codegen_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
