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

#include "ksynth/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ksynth/codegen.hpp"
#include "ksynth/executor.hpp"
#include "ksynth/planner.hpp"
#include "ksynth/subprocess.hpp"
#include "ksynth/trace.hpp"

namespace ksynth {

namespace fs = std::filesystem;

namespace {

// Runs `body`, mapping exception classes onto the exit-code contract.
template <typename Result, typename Body>
Result guarded(const char* command, Body&& body) {
  Result r;
  try {
    body(r);
  } catch (const ParseError& e) {
    r.exit_code = kExitInput;
    r.message = fmt::format("{}: parse error: {}", command, e.what());
  } catch (const ValidationError& e) {
    r.exit_code = kExitInput;
    r.message = fmt::format("{}: invalid input: {}", command, e.what());
  } catch (const CompositionError& e) {
    r.exit_code = kExitInput;
    r.message = fmt::format("{}: {}", command, e.what());
  } catch (const RegistryError& e) {
    r.exit_code = kExitInfra;
    r.message = fmt::format("{}: registry failure: {}", command, e.what());
  } catch (const HarnessError& e) {
    r.exit_code = kExitInfra;
    r.message = fmt::format("{}: executor failure: {}", command, e.what());
  } catch (const SubprocessError& e) {
    r.exit_code = kExitInfra;
    r.message = fmt::format("{}: subprocess failure: {}", command, e.what());
  } catch (const std::exception& e) {
    r.exit_code = kExitInfra;
    r.message = fmt::format("{}: internal error: {}", command, e.what());
  }
  return r;
}

nlohmann::ordered_json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot read " + p.string());
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw RegistryError("cannot write " + p.string());
  out << text;
}

std::vector<DimBindings> desk_settings(const CompGraph& g) {
  if (g.desk_dims.empty()) return {DimBindings{}};
  return g.desk_dims;
}

std::vector<Shape> descriptor_shapes(const ProposedPattern& p) {
  std::vector<Shape> out;
  for (const auto& [_, s] : p.descriptor.input_shapes) out.push_back(s);
  return out;
}

// Verifies one pattern in isolation: only it is rewritten, at every desk
// setting. Returns an empty string on success.
std::string verify_isolated(const CompGraph& g, const ProposedPattern& p, const RunConfig& cfg) {
  const CompGraph rw = rewrite(g, {call_site(p, "")});
  for (const auto& dims : desk_settings(g)) {
    const auto r = verify_composed(g, rw, dims, cfg.tol, cfg.seed);
    if (!r.pass) {
      double worst = 0;
      for (const auto& c : r.kernels) worst = std::max(worst, c.close.max_abs_diff);
      for (const auto& c : r.outputs) worst = std::max(worst, c.close.max_abs_diff);
      return fmt::format("verification failed at {} (max_abs_diff {:.3g})", r.to_json()["dims"].dump(), worst);
    }
  }
  return {};
}

nlohmann::ordered_json outcome_json(const PatternOutcome& o) {
  nlohmann::ordered_json j;
  j["pattern_id"] = o.pattern_id;
  j["rule"] = std::string(to_string(o.rule));
  j["status"] = o.status;
  if (!o.registry_id.empty()) j["registry_id"] = o.registry_id;
  if (!o.reason.empty()) j["reason"] = o.reason;
  j["attempts"] = nlohmann::ordered_json::array();
  for (const auto& a : o.attempts) {
    j["attempts"].push_back({{"attempt", a.attempt},
                             {"example_rank", a.example_rank},
                             {"example", a.example},
                             {"outcome", a.outcome},
                             {"detail", a.detail}});
  }
  j["tuning"] = o.tuning ? o.tuning->to_json() : nlohmann::ordered_json(nullptr);
  j["benchmark"] = o.benchmark ? o.benchmark->to_json() : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace

fs::path resolve_registry_path(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kRegistryEnv); env && *env) return env;
  return "registry";
}

DiscoverResult run_discover(const fs::path& trace, const RunConfig& cfg) {
  return guarded<DiscoverResult>("discover", [&](DiscoverResult& r) {
    if (!fs::exists(trace)) throw ValidationError("trace file not found: " + trace.string());
    const CompGraph g = load_trace_file(trace.string());
    auto planner = make_planner(cfg.planner);
    const auto outcome = plan_patterns(PlanningRequest{g, cfg.arch, cfg.dtype}, *planner);
    r.document = proposals_document(g, cfg.arch, outcome.proposals);
    r.proposals = outcome.proposals.size();
    if (r.proposals == 0) {
      r.exit_code = kExitNoProposals;
      r.message = fmt::format("discover: no patterns proposed for '{}' on {}", g.name, to_string(cfg.arch));
      return;
    }
    std::vector<std::string> rules;
    for (const auto& p : outcome.proposals) rules.push_back(p.pattern_id + "=" + std::string(to_string(p.rule)));
    r.message = fmt::format("discover: {} proposal(s) for '{}' on {}: {}", r.proposals, g.name, to_string(cfg.arch),
                            fmt::join(rules, ", "));
  });
}

nlohmann::ordered_json RealizeResult::to_json() const {
  nlohmann::ordered_json j;
  j["exit_code"] = exit_code;
  j["emissions"] = emissions;
  j["reuses"] = reuses;
  j["patterns"] = nlohmann::ordered_json::array();
  for (const auto& o : patterns) j["patterns"].push_back(outcome_json(o));
  if (!message.empty()) j["message"] = message;
  return j;
}

RealizeResult run_realize(const fs::path& proposals_path, const RunConfig& cfg, const fs::path& staging) {
  return guarded<RealizeResult>("realize", [&](RealizeResult& r) {
    const ProposalsDoc doc = parse_proposals_document(read_json(proposals_path));
    const auto proposals = validate_proposals(doc.graph, doc.arch, doc.proposals);
    const ArchProfile& profile = arch_profile(doc.arch);
    auto executor = make_executor(cfg.executor, doc.arch);
    Registry reg(cfg.registry, {cfg.deterministic});

    for (const auto& p : proposals) {
      PatternOutcome o;
      o.pattern_id = p.pattern_id;
      o.rule = p.rule;
      const PatternKey key{p.rule, p.dtype, p.arch};
      const auto shapes = descriptor_shapes(p);

      if (cfg.reuse) {
        const auto hits = reg.query(key, shapes);
        if (!hits.empty()) {
          o.status = "reused";
          o.registry_id = hits.front().id;
          ++r.reuses;
          spdlog::info("realize: reuse {} ({}) -> registry entry {}", p.pattern_id, key.str(), o.registry_id);
          r.patterns.push_back(std::move(o));
          continue;
        }
      }

      // Accept/retry loop: each retry cites the next-ranked example.
      TuneConfig config = default_config(p);
      std::optional<KernelSpec> spec;
      const std::size_t examples = std::max<std::size_t>(1, p.supporting_examples.size());
      for (int a = 0; a < cfg.max_attempts && !spec; ++a) {
        AttemptRecord rec;
        rec.attempt = a + 1;
        rec.example_rank = std::min<std::size_t>(static_cast<std::size_t>(a), examples - 1);
        rec.example = p.supporting_examples.empty() ? "" : p.supporting_examples[rec.example_rank];
        try {
          KernelSpec s = emit_kernel(p, config, profile, {cfg.template_dir, rec.example_rank});
          ++r.emissions;
          const auto report = structural_check(s, p, config);
          if (!report.ok()) {
            rec.outcome = "structural";
            rec.detail = fmt::format("{}", fmt::join(report.violations, "; "));
          } else if (auto err = verify_isolated(doc.graph, p, cfg); !err.empty()) {
            rec.outcome = "verification";
            rec.detail = err;
          } else {
            rec.outcome = "ok";
            spec = std::move(s);
          }
        } catch (const CodegenError& e) {
          rec.outcome = "emit_error";
          rec.detail = e.what();
        }
        spdlog::info("realize: {} attempt {} ({}): {}{}", p.pattern_id, rec.attempt, rec.example, rec.outcome,
                     rec.detail.empty() ? "" : " - " + rec.detail);
        o.attempts.push_back(std::move(rec));
      }
      if (!spec) {
        o.status = "skipped";
        o.reason = fmt::format("rejected after {} attempt(s)", o.attempts.size());
        spdlog::warn("realize: skipping {}: {}", p.pattern_id, o.reason);
        r.patterns.push_back(std::move(o));
        continue;
      }

      const std::optional<std::string> space =
          is_gemm_rule(p.rule) ? (cfg.space ? cfg.space : default_space(p.rule, p.arch)) : std::nullopt;
      if (space) {
        const GemmProblem problem = gemm_problem(p);
        const auto configs = enumerate_space(profile, problem, *space);
        SweepOptions so;
        so.seed = cfg.seed;
        so.concurrency = cfg.concurrency;
        const auto results = sweep(configs, profile, problem, *executor, so);
        const auto summary = summarize(results);
        const auto best = select_best(results);
        if (!best) {
          o.status = "skipped";
          o.reason = fmt::format("no viable config in space '{}' ({} swept)", *space, summary.swept);
          spdlog::warn("realize: skipping {}: {}", p.pattern_id, o.reason);
          r.patterns.push_back(std::move(o));
          continue;
        }
        o.tuning = TuningRecord{*space, best->config, summary.swept, summary.valid, summary.failed, best->mean_ms};
        o.benchmark = BenchmarkRecord{best->mean_ms, best->tflops, best->speedup_vs_baseline, executor->name()};
        if (best->speedup_vs_baseline > 0 && best->speedup_vs_baseline < cfg.accept_threshold) {
          o.status = "skipped";
          o.reason = fmt::format("best speedup {:.3f} below accept threshold {:.3f}", best->speedup_vs_baseline,
                                 cfg.accept_threshold);
          spdlog::warn("realize: skipping {}: {}", p.pattern_id, o.reason);
          r.patterns.push_back(std::move(o));
          continue;
        }
        config = best->config;
        KernelSpec tuned = emit_kernel(p, config, profile, {cfg.template_dir, o.attempts.back().example_rank});
        ++r.emissions;
        const auto report = structural_check(tuned, p, config);
        if (!report.ok()) {
          o.status = "skipped";
          o.reason = "tuned kernel failed structural check: " + fmt::format("{}", fmt::join(report.violations, "; "));
          r.patterns.push_back(std::move(o));
          continue;
        }
        spec = std::move(tuned);
      }

      const fs::path dir = write_spec(*spec, staging);
      EntryDraft d;
      d.key = key;
      d.descriptor = p.descriptor;
      d.config = config;
      d.kernel_file = dir / "kernel.cu";
      d.kernel_sha256 = spec->content_hash;
      d.wrapper_text = spec->wrapper_text;
      d.tuning = o.tuning;
      d.benchmark = o.benchmark;
      d.supporting_examples = p.supporting_examples;
      o.registry_id = reg.insert(d);
      o.status = "inserted";
      spdlog::info("realize: {} -> registry entry {}", p.pattern_id, o.registry_id);
      r.patterns.push_back(std::move(o));
    }

    std::size_t inserted = 0, skipped = 0;
    for (const auto& o : r.patterns) {
      inserted += o.status == "inserted";
      skipped += o.status == "skipped";
    }
    r.message = fmt::format("realize: {} inserted, {} reused, {} skipped, {} emission(s)", inserted, r.reuses,
                            skipped, r.emissions);
  });
}

ComposeResult run_compose(const fs::path& trace, const RunConfig& cfg, const ComposeOptions& opts) {
  return guarded<ComposeResult>("compose", [&](ComposeResult& r) {
    if (!fs::exists(trace)) throw ValidationError("trace file not found: " + trace.string());
    const CompGraph g = load_trace_file(trace.string());
    auto planner = make_planner(cfg.planner);
    const auto proposals = plan_patterns(PlanningRequest{g, cfg.arch, cfg.dtype}, *planner).proposals;
    const Registry reg(cfg.registry);

    std::vector<CallSite> sites;
    for (const auto& p : proposals) {
      const auto hits = reg.query({p.rule, p.dtype, p.arch}, descriptor_shapes(p));
      if (hits.empty()) {
        r.unreplaced.push_back(p.pattern_id);
        continue;
      }
      sites.push_back(call_site(p, hits.front().id));
      r.replaced.push_back(p.pattern_id);
    }
    if (sites.empty()) {
      r.exit_code = kExitInput;
      r.message = fmt::format("compose: no accepted patterns in registry '{}' for '{}'", cfg.registry.string(), g.name);
      return;
    }

    CompGraph rw = rewrite(g, sites);
    if (opts.mutation) {
      const auto fixtures = load_mutation_fixtures();
      auto it = std::find_if(fixtures.begin(), fixtures.end(), [&](const auto& f) { return f.name == *opts.mutation; });
      if (it == fixtures.end()) throw ValidationError("unknown mutation fixture '" + *opts.mutation + "'");
      if (inject_mutation(rw, it->rule, it->mutation) == 0) {
        throw ValidationError("mutation '" + it->name + "' targets " + std::string(to_string(it->rule)) +
                              ", which was not composed");
      }
    }

    fs::create_directories(opts.out_dir);
    const std::string stem = trace.stem().string();
    const fs::path composed = opts.out_dir / (stem + ".composed.json");
    write_text(composed, to_trace_json(rw).dump(2) + "\n");
    r.written.push_back(composed);

    r.verified = true;
    nlohmann::ordered_json vj;
    vj["trace"] = g.name;
    vj["trials"] = opts.trials;
    vj["reports"] = nlohmann::ordered_json::array();
    for (const auto& dims : desk_settings(g)) {
      for (int t = 0; t < opts.trials; ++t) {
        auto rep = verify_composed(g, rw, dims, cfg.tol, cfg.seed + static_cast<std::uint64_t>(t));
        r.verified = r.verified && rep.pass;
        vj["reports"].push_back(rep.to_json());
        r.verification.push_back(std::move(rep));
      }
    }
    vj["pass"] = r.verified;
    const fs::path vpath = opts.out_dir / "verification.json";
    write_text(vpath, vj.dump(2) + "\n");
    r.written.push_back(vpath);

    // Shipped timings are keyed by trace file name, then by graph name.
    fs::path timings = opts.timings ? *opts.timings : block_replay_path(stem);
    if (!opts.timings && !fs::exists(timings)) timings = block_replay_path(g.name);
    if (fs::exists(timings)) {
      r.bench = bench_report(ablate(g, sites), BlockTimings::load(timings));
      write_text(opts.out_dir / "bench.json", r.bench->to_json().dump(2) + "\n");
      write_text(opts.out_dir / "bench.md", r.bench->to_markdown());
      r.written.push_back(opts.out_dir / "bench.json");
      r.written.push_back(opts.out_dir / "bench.md");
    } else if (opts.timings) {
      throw ValidationError("timings file not found: " + timings.string());
    } else {
      spdlog::warn("compose: no block timings for '{}'; ablation report not written", g.name);
    }

    if (!r.verified) {
      r.exit_code = kExitVerifyFailed;
      r.message = fmt::format("compose: verification FAILED for '{}' (reports in {})", g.name, opts.out_dir.string());
      return;
    }
    r.message = fmt::format("compose: '{}' replaced {} pattern(s), verified over {} trial(s)", g.name,
                            r.replaced.size(), r.verification.size());
  });
}

std::string registry_table(const std::vector<RegistryEntry>& entries) {
  std::ostringstream os;
  const auto row = [&](const std::string& id, const std::string& rule, const std::string& dtype,
                       const std::string& arch, const std::string& config, const std::string& status,
                       const std::string& speedup) {
    os << fmt::format("{:<44} {:<13} {:<5} {:<5} {:<26} {:<10} {}\n", id, rule, dtype, arch, config, status, speedup);
  };
  row("ID", "RULE", "DTYPE", "ARCH", "CONFIG", "STATUS", "SPEEDUP");
  for (const auto& e : entries) {
    const std::string speedup = e.benchmark ? fmt::format("{:.2f}", e.benchmark->speedup_vs_baseline) : "-";
    row(e.id, std::string(to_string(e.key.rule)), std::string(to_string(e.key.dtype)),
        std::string(to_string(e.key.arch)), e.config.slug(), std::string(to_string(e.status)), speedup);
  }
  return os.str();
}

std::vector<Shape> parse_shape_list(const std::string& text) {
  static const std::regex kShape(R"(\d+(x\d+)*)");
  std::vector<Shape> out;
  std::stringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    if (!std::regex_match(item, kShape)) throw ValidationError("bad shape '" + item + "' (expected e.g. 4096x4096)");
    Shape s;
    std::stringstream dims(item);
    for (std::string d; std::getline(dims, d, 'x');) {
      const long long v = std::stoll(d);
      if (v <= 0) throw ValidationError("bad shape '" + item + "': extents must be positive");
      s.push_back(v);
    }
    out.push_back(std::move(s));
  }
  if (out.empty() || text.back() == ',') throw ValidationError("bad shape list '" + text + "'");
  return out;
}

}  // namespace ksynth
