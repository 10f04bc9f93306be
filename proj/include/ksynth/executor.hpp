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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ksynth/subprocess.hpp"
#include "ksynth/tuner.hpp"

namespace ksynth {

/// The executor could not run this config (compile or launch failure).
/// Sweep records it as launch_failure and moves on.
class ExecutorFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The executor itself is broken (protocol violation, dead child). Aborts
/// the sweep.
class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExecRequest {
  TuneConfig config;
  GemmProblem problem;
  Protocol protocol;
  std::string kernel_path;  // emitted source, empty if none
  std::uint64_t seed = 42;
};

class Executor {
 public:
  virtual ~Executor() = default;
  virtual std::string name() const = 0;
  /// Whether measure() may be called from several threads at once.
  virtual bool concurrent_safe() const = 0;
  /// Mean of the timed iterations in milliseconds. Throws ExecutorFailure
  /// or HarnessError.
  virtual double measure(const ExecRequest& req) = 0;
  /// Reference library time for the problem, if the executor knows one.
  virtual std::optional<double> baseline_ms(const GemmProblem&) { return std::nullopt; }
  std::int64_t invocations() const { return invocations_.load(); }

 protected:
  std::atomic<std::int64_t> invocations_{0};
};

/// Deterministic cost model:
///   mean_ms = flops / (peak * e), e = min(0.85, e_tile * e_stage)
///   e_tile  = min(1, Mt*Nt / (128*256))^0.25 * balance
///   balance = 1 / (1 + 0.05 * |log2(Mt/Nt)|)
///   e_stage = 1 - 0.05 * |stages - 3|   (SM80; 1 on SM90)
/// Baseline is the same problem at 70% of peak.
class AnalyticExecutor : public Executor {
 public:
  explicit AnalyticExecutor(const ArchProfile& profile) : profile_(profile) {}
  std::string name() const override { return "analytic"; }
  bool concurrent_safe() const override { return true; }
  double measure(const ExecRequest& req) override;
  std::optional<double> baseline_ms(const GemmProblem& p) override;
  double model_efficiency(const TuneConfig& c) const;

 private:
  const ArchProfile& profile_;
};

/// Replay fixture: {name, space, arch, problem, baseline_ms, baseline_label,
/// measurements:[{config: slug, mean_ms | "launch_failure"}]}.
struct ReplayFixture {
  std::string name;
  std::string space;
  Arch arch = Arch::SM80;
  GemmProblem problem;
  double baseline_ms = 0;
  std::string baseline_label;
  std::map<std::string, std::optional<double>> measurements;  // nullopt = launch failure
};

ReplayFixture parse_replay(const nlohmann::json& j);
/// `<data>/replay/<name>.json`, or a path ending in ".json".
ReplayFixture load_replay(const std::string& name);

class ReplayExecutor : public Executor {
 public:
  explicit ReplayExecutor(ReplayFixture fixture) : fx_(std::move(fixture)) {}
  std::string name() const override { return "replay:" + fx_.name; }
  bool concurrent_safe() const override { return true; }
  double measure(const ExecRequest& req) override;
  std::optional<double> baseline_ms(const GemmProblem&) override { return fx_.baseline_ms; }
  const ReplayFixture& fixture() const { return fx_; }

 private:
  ReplayFixture fx_;
};

/// Line protocol to a long-running child. Request per line:
///   {"kernel_path","config","problem","protocol":{"warmup","timed"},"seed"}
/// Response per line: {"mean_ms":x} or {"error":"...","stage":"compile|launch|verify"}.
/// A missing/garbled reply or early exit is a HarnessError.
class ExternalExecutor : public Executor {
 public:
  explicit ExternalExecutor(std::string command, std::chrono::milliseconds timeout = std::chrono::seconds(600));
  ~ExternalExecutor() override;
  std::string name() const override { return "external:" + command_; }
  bool concurrent_safe() const override { return false; }
  double measure(const ExecRequest& req) override;
  /// Closes the child; a nonzero exit status is a HarnessError.
  void finish();

 private:
  std::string command_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<LineProcess> proc_;
  std::mutex mu_;
};

/// "analytic", "replay:<name|path>" or "external:<command>".
std::unique_ptr<Executor> make_executor(const std::string& choice, Arch arch);

struct SweepOptions {
  Protocol protocol;
  std::uint64_t seed = 42;
  int concurrency = 1;                  // capped at 1 for executors that are not concurrent_safe
  std::optional<double> baseline_ms;    // overrides the executor's baseline
  std::string kernel_path;
};

/// One result per config, in config order. Invalid configs never reach the
/// executor.
std::vector<TuneResult> sweep(const std::vector<TuneConfig>& configs, const ArchProfile& profile,
                              const GemmProblem& problem, Executor& executor, const SweepOptions& opts = {});

struct SweepSummary {
  std::size_t swept = 0, valid = 0, failed = 0, invalid = 0;
};
SweepSummary summarize(const std::vector<TuneResult>& results);

}  // namespace ksynth
