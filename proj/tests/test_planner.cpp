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
#include <filesystem>
#include <fstream>

#include "ksynth/planner.hpp"
#include "ksynth/subprocess.hpp"
#include "test_support.hpp"

using namespace ksynth;
using namespace std::chrono_literals;
using ksynth::testing::load_fixture;

namespace {

const std::string kFixtures = std::string(KSYNTH_SOURCE_DIR) + "/tests/fixtures/planner/";

std::string temp_file(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("ksynth_planner_" + name);
  std::ofstream(p) << body;
  return p.string();
}

// Consumes the request then prints a canned response.
std::string replay_command(const std::string& path) { return "cat >/dev/null; cat '" + path + "'"; }

}  // namespace

TEST_CASE("run_command pipes stdin to stdout and reports the exit code") {
  const auto r = run_command("tr a-z A-Z; exit 3", "hello\n", 5s);
  CHECK(r.out == "HELLO\n");
  CHECK(r.exit_code == 3);
  CHECK_FALSE(r.timed_out);
  const auto big = std::string(1 << 20, 'x');
  CHECK(run_command("wc -c", big, 5s).out.find("1048576") != std::string::npos);
  // A child that never reads its input must not wedge the writer.
  CHECK(run_command("echo done", big, 5s).out == "done\n");
}

TEST_CASE("run_command kills children that outlive the timeout") {
  const auto start = std::chrono::steady_clock::now();
  const auto r = run_command("sleep 10", "", 200ms);
  CHECK(r.timed_out);
  CHECK(std::chrono::steady_clock::now() - start < 5s);
}

TEST_CASE("line process answers one line per request") {
  LineProcess p("while read l; do echo \"got:$l\"; done");
  CHECK(p.request("a", 5s) == std::optional<std::string>("got:a"));
  CHECK(p.request("b c", 5s) == std::optional<std::string>("got:b c"));
  CHECK(p.close() == 0);
  CHECK_FALSE(p.request("late", 1s).has_value());

  LineProcess mute("sleep 10");
  CHECK_FALSE(mute.request("x", 100ms).has_value());
}

TEST_CASE("planning request round-trips") {
  PlanningRequest req{load_fixture("llama3_block"), Arch::SM90, DType::bf16};
  const auto back = PlanningRequest::from_json(nlohmann::ordered_json::parse(req.to_json().dump()));
  CHECK(back.arch == Arch::SM90);
  CHECK(back.dtype_policy == std::optional<DType>(DType::bf16));
  CHECK(back.graph.nodes.size() == req.graph.nodes.size());
}

TEST_CASE("builtin planner is the deterministic proposal path") {
  const CompGraph g = load_fixture("minigpt_block");
  BuiltinPlanner builtin;
  const PlanOutcome out = plan_patterns({g, Arch::SM80, std::nullopt}, builtin);
  CHECK_FALSE(out.fell_back);
  CHECK(out.planner == "builtin");
  CHECK(planning_response(out.proposals).dump() == planning_response(propose_patterns(g, Arch::SM80)).dump());
}

TEST_CASE("external planner echoing builtin proposals is accepted unchanged") {
  const CompGraph g = load_fixture("minigpt_block");
  const auto expected = planning_response(propose_patterns(g, Arch::SM80));
  ExternalPlanner ext(replay_command(temp_file("echo.json", expected.dump())));
  const PlanOutcome out = plan_patterns({g, Arch::SM80, std::nullopt}, ext);
  CHECK_FALSE(out.fell_back);
  CHECK(out.planner.rfind("external:", 0) == 0);
  CHECK(planning_response(out.proposals).dump() == expected.dump());
}

TEST_CASE("external planner returning a non-convex node set falls back") {
  const CompGraph g = load_fixture("minigpt_block");
  ExternalPlanner ext(replay_command(kFixtures + "nonconvex_response.json"));
  CHECK_THROWS_AS(validate_proposals(g, Arch::SM80, ext.propose({g, Arch::SM80, std::nullopt})), ValidationError);
  const PlanOutcome out = plan_patterns({g, Arch::SM80, std::nullopt}, ext);
  CHECK(out.fell_back);
  CHECK(out.planner == "builtin");
  CHECK(out.fallback_reason.find("convex") != std::string::npos);
  CHECK(out.proposals.size() == 2);
}

TEST_CASE("external planner protocol violations fall back") {
  const CompGraph g = load_fixture("p1_square_gemm");
  const PlanningRequest req{g, Arch::SM90, std::nullopt};
  for (const char* cmd : {"cat >/dev/null; echo not-json", "cat >/dev/null; echo '{\"proposals\":1}'",
                          "cat >/dev/null; exit 4", "/nonexistent/planner"}) {
    ExternalPlanner ext(cmd);
    const PlanOutcome out = plan_patterns(req, ext);
    CHECK_MESSAGE(out.fell_back, cmd);
    CHECK(out.proposals.size() == 1);
  }
  ExternalPlanner slow("sleep 10", 200ms);
  const PlanOutcome out = plan_patterns(req, slow);
  CHECK(out.fell_back);
  CHECK(out.fallback_reason.find("timed out") != std::string::npos);
}

TEST_CASE("external planner receives the request on stdin") {
  const CompGraph g = load_fixture("p1_square_gemm");
  const std::string dump = (std::filesystem::temp_directory_path() / "ksynth_planner_request.json").string();
  const auto canned = temp_file("p1.json", planning_response(propose_patterns(g, Arch::SM90)).dump());
  ExternalPlanner ext("cat > '" + dump + "'; cat '" + canned + "'");
  const PlanOutcome out = plan_patterns({g, Arch::SM90, std::nullopt}, ext);
  CHECK_FALSE(out.fell_back);
  std::ifstream in(dump);
  const auto req = PlanningRequest::from_json(nlohmann::ordered_json::parse(in));
  CHECK(req.arch == Arch::SM90);
  CHECK(req.graph.name == g.name);
}

TEST_CASE("planner choice parsing") {
  CHECK(make_planner("builtin")->name() == "builtin");
  CHECK(make_planner("external:./x")->name() == "external:./x");
  CHECK_THROWS_AS(make_planner("llm"), ValidationError);
  CHECK_THROWS_AS(make_planner("external:"), ValidationError);
}
