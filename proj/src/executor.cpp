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

#include "ksynth/executor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "ksynth/examples_index.hpp"

namespace ksynth {

double AnalyticExecutor::model_efficiency(const TuneConfig& c) const {
  const double mt = c.tb_tile[0], nt = c.tb_tile[1];
  const double balance = 1.0 / (1.0 + 0.05 * std::abs(std::log2(mt / nt)));
  const double e_tile = std::pow(std::min(1.0, (mt * nt) / (128.0 * 256.0)), 0.25) * balance;
  const double e_stage = c.arch == Arch::SM80 ? 1.0 - 0.05 * std::abs(c.stages - 3) : 1.0;
  return std::min(0.85, e_tile * e_stage);
}

double AnalyticExecutor::measure(const ExecRequest& req) {
  ++invocations_;
  const double e = model_efficiency(req.config);
  if (e <= 0) throw ExecutorFailure("model efficiency is not positive");
  // Every timed iteration takes the same modeled time, so the mean is exact.
  return req.problem.flops() / (profile_.peak(req.problem.dtype_in) * 1e12 * e) * 1e3;
}

std::optional<double> AnalyticExecutor::baseline_ms(const GemmProblem& p) {
  return p.flops() / (profile_.peak(p.dtype_in) * 1e12 * 0.7) * 1e3;
}

ReplayFixture parse_replay(const nlohmann::json& j) {
  try {
    ReplayFixture fx;
    fx.name = j.at("name").get<std::string>();
    fx.space = j.value("space", std::string());
    fx.arch = arch_or_throw(j.at("arch").get<std::string>());
    fx.problem = GemmProblem::from_json(j.at("problem"));
    fx.baseline_ms = j.at("baseline_ms").get<double>();
    fx.baseline_label = j.value("baseline_label", std::string());
    for (const auto& m : j.at("measurements")) {
      const std::string slug = parse_slug(m.at("config").get<std::string>()).slug();
      const auto& v = m.at("mean_ms");
      if (v.is_string()) {
        if (v.get<std::string>() != "launch_failure") throw ValidationError("replay '" + fx.name + "': bad mean_ms");
        fx.measurements[slug] = std::nullopt;
      } else {
        fx.measurements[slug] = v.get<double>();
      }
    }
    return fx;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("replay fixture: ") + e.what());
  }
}

ReplayFixture load_replay(const std::string& name) {
  const bool is_path = name.size() > 5 && name.substr(name.size() - 5) == ".json";
  const std::filesystem::path path =
      is_path ? std::filesystem::path(name) : std::filesystem::path(data_dir()) / "replay" / (name + ".json");
  std::ifstream in(path);
  if (!in) throw ValidationError("unknown replay fixture '" + name + "' (no " + path.string() + ")");
  try {
    return parse_replay(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("replay fixture '" + name + "': " + e.what());
  }
}

double ReplayExecutor::measure(const ExecRequest& req) {
  ++invocations_;
  const auto it = fx_.measurements.find(req.config.slug());
  if (it == fx_.measurements.end()) throw ExecutorFailure("no recorded measurement for " + req.config.slug());
  if (!it->second) throw ExecutorFailure("recorded launch failure");
  return *it->second;
}

ExternalExecutor::ExternalExecutor(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {}

ExternalExecutor::~ExternalExecutor() {
  if (proc_) proc_->close();
}

double ExternalExecutor::measure(const ExecRequest& req) {
  std::lock_guard<std::mutex> lock(mu_);
  ++invocations_;
  if (!proc_) {
    try {
      proc_ = std::make_unique<LineProcess>(command_);
    } catch (const SubprocessError& e) {
      throw HarnessError(e.what());
    }
  }
  nlohmann::ordered_json j;
  j["kernel_path"] = req.kernel_path;
  j["config"] = req.config.to_json();
  j["problem"] = req.problem.to_json();
  j["protocol"] = {{"warmup", req.protocol.warmup}, {"timed", req.protocol.timed}};
  j["seed"] = req.seed;
  const auto line = proc_->request(j.dump(), timeout_);
  if (!line) {
    const int code = proc_->close(std::chrono::milliseconds(200));
    throw HarnessError("executor '" + command_ + "' gave no response (exit " + std::to_string(code) + ")");
  }
  nlohmann::json r;
  try {
    r = nlohmann::json::parse(*line);
  } catch (const nlohmann::json::parse_error&) {
    throw HarnessError("executor '" + command_ + "' sent a malformed response: " + *line);
  }
  if (r.is_object() && r.contains("mean_ms") && r["mean_ms"].is_number()) {
    const double ms = r["mean_ms"].get<double>();
    if (!(ms > 0)) throw HarnessError("executor '" + command_ + "' reported non-positive mean_ms");
    return ms;
  }
  if (r.is_object() && r.contains("error")) {
    const std::string stage = r.value("stage", std::string("launch"));
    throw ExecutorFailure(stage + ": " + r["error"].dump());
  }
  throw HarnessError("executor '" + command_ + "' response lacks mean_ms and error: " + *line);
}

void ExternalExecutor::finish() {
  std::lock_guard<std::mutex> lock(mu_);
  if (!proc_) return;
  const int code = proc_->close();
  proc_.reset();
  if (code != 0) throw HarnessError("executor '" + command_ + "' exited with status " + std::to_string(code));
}

std::unique_ptr<Executor> make_executor(const std::string& choice, Arch arch) {
  if (choice == "analytic") return std::make_unique<AnalyticExecutor>(arch_profile(arch));
  if (choice.rfind("replay:", 0) == 0 && choice.size() > 7) {
    auto fx = load_replay(choice.substr(7));
    if (fx.arch != arch) {
      throw ValidationError("replay fixture '" + fx.name + "' is for " + std::string(to_string(fx.arch)));
    }
    return std::make_unique<ReplayExecutor>(std::move(fx));
  }
  if (choice.rfind("external:", 0) == 0 && choice.size() > 9) return std::make_unique<ExternalExecutor>(choice.substr(9));
  throw ValidationError("unknown executor '" + choice + "' (expected analytic, replay:<name> or external:<command>)");
}

std::vector<TuneResult> sweep(const std::vector<TuneConfig>& configs, const ArchProfile& profile,
                              const GemmProblem& problem, Executor& executor, const SweepOptions& opts) {
  std::vector<TuneResult> results(configs.size());
  const std::optional<double> baseline = opts.baseline_ms ? opts.baseline_ms : executor.baseline_ms(problem);

  auto run_one = [&](std::size_t i) {
    TuneResult& r = results[i];
    r.config = configs[i];
    r.trials = opts.protocol;
    const Validation v = validate_config(configs[i], profile, problem);
    if (!v.ok) {
      r.status = TuneStatus::invalid;
      r.reason = v.reason;
      return;
    }
    try {
      r.mean_ms = executor.measure({configs[i], problem, opts.protocol, opts.kernel_path, opts.seed});
      r.status = TuneStatus::ok;
      r.tflops = tflops_of(problem, r.mean_ms);
      if (baseline && *baseline > 0) r.speedup_vs_baseline = *baseline / r.mean_ms;
    } catch (const ExecutorFailure& e) {
      r.status = TuneStatus::launch_failure;
      r.mean_ms = 0;
      r.reason = e.what();
    }
  };

  const int width = executor.concurrent_safe() ? std::max(1, opts.concurrency) : 1;
  if (width == 1 || configs.size() < 2) {
    for (std::size_t i = 0; i < configs.size(); ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < width; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < configs.size(); i = next++) {
        try {
          run_one(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          next = configs.size();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

SweepSummary summarize(const std::vector<TuneResult>& results) {
  SweepSummary s;
  s.swept = results.size();
  for (const auto& r : results) {
    if (r.status == TuneStatus::ok) ++s.valid;
    if (r.status == TuneStatus::invalid) ++s.invalid;
  }
  s.failed = s.swept - s.valid;
  return s;
}

}  // namespace ksynth
