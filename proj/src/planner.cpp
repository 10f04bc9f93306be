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

#include "ksynth/planner.hpp"

#include <spdlog/spdlog.h>

#include "ksynth/subprocess.hpp"
#include "ksynth/trace.hpp"

namespace ksynth {

nlohmann::ordered_json PlanningRequest::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["arch"] = std::string(to_string(arch));
  j["dtype_policy"] = dtype_policy ? nlohmann::ordered_json(std::string(to_string(*dtype_policy))) : nullptr;
  j["graph"] = to_trace_json(graph);
  return j;
}

PlanningRequest PlanningRequest::from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.value("schema_version", 0) != 1) throw ValidationError("planning request: unsupported schema_version");
    PlanningRequest r;
    const auto arch = parse_arch(j.at("arch").get<std::string>());
    if (!arch) throw ValidationError("planning request: unknown arch");
    r.arch = *arch;
    if (const auto it = j.find("dtype_policy"); it != j.end() && !it->is_null()) {
      const auto dt = parse_dtype(it->get<std::string>());
      if (!dt) throw ValidationError("planning request: unknown dtype_policy");
      r.dtype_policy = *dt;
    }
    r.graph = ingest_trace_json(nlohmann::json(j.at("graph")));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("planning request: ") + e.what());
  }
}

std::vector<ProposedPattern> BuiltinPlanner::propose(const PlanningRequest& req) {
  return propose_patterns(req.graph, req.arch, req.dtype_policy);
}

std::vector<ProposedPattern> ExternalPlanner::propose(const PlanningRequest& req) {
  CommandResult r;
  try {
    r = run_command(command_, req.to_json().dump() + "\n", timeout_);
  } catch (const SubprocessError& e) {
    throw PlannerError(e.what());
  }
  if (r.timed_out) throw PlannerError("timed out after " + std::to_string(timeout_.count()) + " ms");
  if (r.exit_code != 0) throw PlannerError("exited with status " + std::to_string(r.exit_code));
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(r.out);
  } catch (const nlohmann::json::parse_error& e) {
    throw PlannerError(std::string("response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema_version", 0) != 1 || !doc.contains("proposals") ||
      !doc["proposals"].is_array()) {
    throw PlannerError("response must be {\"schema_version\":1,\"proposals\":[...]}");
  }
  std::vector<ProposedPattern> out;
  for (const auto& p : doc["proposals"]) out.push_back(ProposedPattern::from_json(p));
  return out;
}

PlanOutcome plan_patterns(const PlanningRequest& req, Planner& planner) {
  PlanOutcome outcome;
  outcome.planner = planner.name();
  if (dynamic_cast<BuiltinPlanner*>(&planner)) {
    outcome.proposals = validate_proposals(req.graph, req.arch, planner.propose(req));
    return outcome;
  }
  try {
    outcome.proposals = validate_proposals(req.graph, req.arch, planner.propose(req));
    return outcome;
  } catch (const std::exception& e) {
    outcome.fallback_reason = e.what();
  }
  spdlog::warn("planner '{}' rejected: {}; falling back to builtin", planner.name(), outcome.fallback_reason);
  BuiltinPlanner builtin;
  outcome.proposals = validate_proposals(req.graph, req.arch, builtin.propose(req));
  outcome.planner = builtin.name();
  outcome.fell_back = true;
  return outcome;
}

std::unique_ptr<Planner> make_planner(const std::string& choice) {
  if (choice == "builtin") return std::make_unique<BuiltinPlanner>();
  const std::string prefix = "external:";
  if (choice.rfind(prefix, 0) == 0 && choice.size() > prefix.size()) {
    return std::make_unique<ExternalPlanner>(choice.substr(prefix.size()));
  }
  throw ValidationError("unknown planner '" + choice + "' (expected builtin or external:<command>)");
}

nlohmann::ordered_json planning_response(const std::vector<ProposedPattern>& ps) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["proposals"] = nlohmann::ordered_json::array();
  for (const auto& p : ps) doc["proposals"].push_back(p.to_json());
  return doc;
}

}  // namespace ksynth
