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

#include <chrono>
#include <fstream>

#include "ksynth/composer.hpp"
#include "ksynth/interpreter.hpp"
#include "ksynth/trace.hpp"
#include "test_support.hpp"

using namespace ksynth;
using namespace ksynth::testing;

namespace {

std::vector<CallSite> sites_for(const CompGraph& g, Arch arch = Arch::SM80) {
  std::vector<CallSite> out;
  for (const auto& p : propose_patterns(g, arch)) out.push_back(call_site(p, "0001-test"));
  return out;
}

std::string doc(const CompGraph& g) { return to_trace_json(g).dump(); }

const char* kBlocks[] = {"minigpt_block", "llama3_block"};

}  // namespace

TEST_CASE("rewrite replaces both MiniGPT patterns") {
  const auto g = load_fixture("minigpt_block");
  const auto sites = sites_for(g);
  REQUIRE(sites.size() == 2);
  const auto rw = rewrite(g, sites);
  CHECK(rw.count(OpKind::kernel_call) == 2);
  CHECK(rw.count(OpKind::softmax) == 0);
  CHECK(rw.count(OpKind::gelu) == 0);
  CHECK(rw.graph_inputs == g.graph_inputs);
  CHECK(rw.graph_outputs == g.graph_outputs);
  for (const auto& id : g.graph_outputs) CHECK(rw.at(id).out_meta == g.at(id).out_meta);
  for (const auto& s : sites) {
    const Node& call = rw.at(kernel_call_id(s.pattern_id));
    CHECK(call.attr_str("registry_id") == "0001-test");
    CHECK(call.attr_str("rule") == to_string(s.rule));
    CHECK(call.attr_str("dtype") == "fp16");
    CHECK(call.inputs.size() == boundary_inputs(g, s.node_ids).size());
    CHECK(call.out_meta == g.at(boundary_outputs(g, s.node_ids)[0]).out_meta);
    for (const auto& id : s.node_ids) CHECK_FALSE(rw.find(id));
  }
  CHECK_NOTHROW(validate_structure(rw));
}

TEST_CASE("rewrite with nothing accepted is the identity") {
  for (const char* name : kBlocks) {
    const auto g = load_fixture(name);
    CHECK(doc(rewrite(g, std::vector<CallSite>{})) == doc(g));
  }
}

TEST_CASE("rewrite rejects overlap and dangling consumers") {
  const auto g = load_fixture("minigpt_block");
  auto sites = sites_for(g);
  SUBCASE("overlap") {
    CallSite extra = sites[0];
    extra.pattern_id = "p9";
    CHECK_THROWS_WITH_AS(rewrite(g, {sites[0], extra}), doctest::Contains("overlap"), CompositionError);
  }
  SUBCASE("dangling consumer") {
    std::ifstream in(data_path("traces/minigpt_block.json"));
    auto j = nlohmann::json::parse(in);
    j["nodes"].push_back({{"id", "tap"}, {"kind", "output"}, {"inputs", {"act"}}, {"attrs", nlohmann::json::object()}});
    j["graph_outputs"].push_back("tap");
    const auto tapped = ingest_trace_json(j);
    for (const auto& s : sites) {
      if (s.rule != RuleTag::MLP_GELU) continue;
      CHECK_THROWS_WITH_AS(rewrite(tapped, {s}), doctest::Contains("dangling"), CompositionError);
    }
  }
  SUBCASE("not an instance") {
    CallSite s = sites[0];
    s.node_ids.erase(s.node_ids.begin());
    CHECK_THROWS_AS(rewrite(g, {s}), CompositionError);
  }
}

TEST_CASE("rewritten graph survives a document round-trip") {
  for (const char* name : kBlocks) {
    const auto g = load_fixture(name);
    const auto rw = rewrite(g, sites_for(g));
    const auto back = ingest_trace_json(nlohmann::json::parse(to_trace_json(rw).dump()));
    CHECK(doc(back) == doc(rw));
    const auto again = call_sites(back);
    REQUIRE(again.size() == 2);
    CHECK(doc(rewrite(g, again)) == doc(rw));
  }
}

TEST_CASE("verify_composed passes over 20 seeds at both desk settings") {
  const auto start = std::chrono::steady_clock::now();
  for (const char* name : kBlocks) {
    const auto g = load_fixture(name);
    const auto rw = rewrite(g, sites_for(g));
    REQUIRE(g.desk_dims.size() == 2);
    for (const auto& dims : g.desk_dims) {
      for (std::uint64_t seed = 42; seed < 62; ++seed) {
        const auto r = verify_composed(g, rw, dims, {1e-3, 1e-5}, seed);
        CHECK_MESSAGE(r.pass, name << " seed " << seed << ": " << r.to_json().dump());
        CHECK(r.kernels.size() == 2);
        CHECK(r.outputs.size() == g.graph_outputs.size());
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 30.0);
}

TEST_CASE("verify_composed at the MiniGPT desk shape (2,8,32) with 2 heads") {
  const auto g = load_fixture("minigpt_block");
  const DimBindings desk = {{"B", 2}, {"T", 8}, {"C", 32}, {"H", 2}};
  const auto r = verify_composed(g, rewrite(g, sites_for(g)), desk);
  CHECK(r.pass);
  CHECK(r.dims.at("C") == 32);
}

TEST_CASE("every shipped semantic mutation fails verification") {
  const auto fixtures = load_mutation_fixtures();
  REQUIRE(fixtures.size() >= 5);
  for (const auto& f : fixtures) {
    CAPTURE(f.name);
    const auto g = load_fixture(f.trace);
    auto rw = rewrite(g, sites_for(g, f.arch));
    REQUIRE(inject_mutation(rw, f.rule, f.mutation) == 1);
    const auto r = verify_composed(g, rw, g.desk_dims.at(0));
    CHECK_FALSE(r.pass);
    // The faulty kernel itself is flagged, not only the block output.
    bool kernel_flagged = false;
    for (const auto& k : r.kernels) {
      const Node& call = rw.at(k.id);
      if (call.attr_str("rule") == to_string(f.rule)) kernel_flagged = !k.close.pass;
    }
    CHECK(kernel_flagged);
    CHECK(r.outputs[0].close.max_abs_diff > 1e-3);
  }
}

TEST_CASE("ablation variants") {
  const auto g = load_fixture("minigpt_block");
  const auto sites = sites_for(g);
  const auto vs = ablate(g, sites);
  REQUIRE(vs.size() == 4);
  CHECK(vs[0].label == "baseline");
  CHECK(vs[1].label == "FMHA-only");
  CHECK(vs[2].label == "MLP_GELU-only");
  CHECK(vs[3].label == "all");
  CHECK(doc(vs[0].graph) == doc(g));
  CHECK(vs[1].graph.count(OpKind::kernel_call) == 1);
  CHECK(vs[1].graph.count(OpKind::gelu) == 1);
  CHECK(vs[2].graph.count(OpKind::softmax) == 1);
  CHECK(doc(vs[3].graph) == doc(rewrite(g, sites)));

  const auto l = load_fixture("llama3_block");
  const auto lv = ablate(l, sites_for(l));
  REQUIRE(lv.size() == 4);
  CHECK(lv[1].label == "FMHA_GQA-only");
  CHECK(lv[2].label == "MLP_SwiGLU-only");

  CHECK(ablate(g, {}).size() == 1);
}

TEST_CASE("bench report speedups from the block replay fixtures") {
  struct Case {
    const char* block;
    std::vector<double> speedups;
    std::vector<std::string> compiler_ms;
  };
  const Case cases[] = {
      {"minigpt_block", {1.00, 1.27, 1.44, 2.03}, {"13.573", "13.907"}},
      {"llama3_block", {1.00, 1.22, 1.12, 1.41}, {"115.741", "114.133"}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.block);
    const auto g = load_fixture(c.block);
    const auto report = bench_report(ablate(g, sites_for(g)), BlockTimings::load(block_replay_path(c.block)));
    REQUIRE(report.variants.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(round_half_up(report.variants[i].speedup, 2) == doctest::Approx(c.speedups[i]).epsilon(1e-12));
      const auto& v = report.variants[i];
      const double base = report.variants[0].mean_ms;
      CHECK(std::abs(round_half_up(v.speedup, 2) * v.mean_ms - base) / base < 0.005);
    }
    CHECK(report.variants[0].speedup == 1.0);
    const auto md = report.to_markdown();
    CHECK(md.rfind("| variant | mean_ms | speedup |", 0) == 0);
    for (const auto& ms : c.compiler_ms) CHECK(md.find("| " + ms + " |") != std::string::npos);
    const auto j = report.to_json();
    REQUIRE(j["compiler_baselines"].size() == 2);
    CHECK(j["compiler_baselines"][0]["mean_ms"].dump() == c.compiler_ms[0]);
    CHECK(j["compiler_baselines"][1]["mean_ms"].dump() == c.compiler_ms[1]);
  }
}

TEST_CASE("bench report edge cases") {
  const auto g = load_fixture("minigpt_block");
  const auto vs = ablate(g, sites_for(g));
  BlockTimings flat;
  flat.block = "minigpt_block";
  for (const auto& v : vs) flat.variants_ms[v.label] = 7.5;
  for (const auto& v : bench_report(vs, flat).variants) CHECK(round_half_up(v.speedup, 2) == 1.0);
  flat.variants_ms.erase("all");
  CHECK_THROWS_WITH_AS(bench_report(vs, flat), doctest::Contains("missing timing"), CompositionError);
}

TEST_CASE("half-up rounding on the decimal representation") {
  CHECK(round_half_up(1.005, 2) == 1.01);
  CHECK(round_half_up(0.125, 2) == 0.13);
  CHECK(round_half_up(2.0282, 2) == 2.03);
  CHECK(round_half_up(1.994999, 2) == 1.99);
  CHECK(round_half_up(9.995, 2) == 10.0);
  CHECK(round_half_up(25.665 / 20.195, 2) == 1.27);
}
