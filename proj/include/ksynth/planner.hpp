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

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksynth/discovery.hpp"

namespace ksynth {

struct PlanningRequest {
  CompGraph graph;
  Arch arch = Arch::SM80;
  std::optional<DType> dtype_policy;  // nullopt: per-rule default

  nlohmann::ordered_json to_json() const;
  static PlanningRequest from_json(const nlohmann::ordered_json& j);
};

/// Raised by a planner that could not produce a well-formed response.
class PlannerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Planner {
 public:
  virtual ~Planner() = default;
  virtual std::string name() const = 0;
  /// Unvalidated proposals; plan_patterns validates them.
  virtual std::vector<ProposedPattern> propose(const PlanningRequest& req) = 0;
};

/// Rule matching, example retrieval and FLOP ranking.
class BuiltinPlanner : public Planner {
 public:
  std::string name() const override { return "builtin"; }
  std::vector<ProposedPattern> propose(const PlanningRequest& req) override;
};

/// Runs `command` once per request: the request document goes to its stdin
/// and a response document {"schema_version":1,"proposals":[...]} is read
/// from its stdout.
class ExternalPlanner : public Planner {
 public:
  explicit ExternalPlanner(std::string command, std::chrono::milliseconds timeout = std::chrono::seconds(120))
      : command_(std::move(command)), timeout_(timeout) {}
  std::string name() const override { return "external:" + command_; }
  std::vector<ProposedPattern> propose(const PlanningRequest& req) override;

 private:
  std::string command_;
  std::chrono::milliseconds timeout_;
};

struct PlanOutcome {
  std::vector<ProposedPattern> proposals;
  std::string planner;           // the planner whose answer was kept
  bool fell_back = false;
  std::string fallback_reason;   // empty unless fell_back
};

/// Asks `planner`, validates the answer against the graph, and falls back to
/// the builtin planner (logging a warning) on any failure of a non-builtin
/// planner. Builtin failures propagate.
PlanOutcome plan_patterns(const PlanningRequest& req, Planner& planner);

/// "builtin" or "external:<command>".
std::unique_ptr<Planner> make_planner(const std::string& choice);

nlohmann::ordered_json planning_response(const std::vector<ProposedPattern>& ps);

}  // namespace ksynth
