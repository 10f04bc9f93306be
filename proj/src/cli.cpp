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

#include "ksynth/cli.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "ksynth/pipeline.hpp"
#include "ksynth/rules.hpp"

namespace ksynth {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::string> registry;
  std::string arch = "sm80";
  std::optional<std::string> dtype;
  std::string executor = "analytic";
  std::string planner = "builtin";
  std::uint64_t seed = 42;
  bool deterministic = false;
  std::string template_dir;
  std::string log_level = "info";
  double rtol = ToleranceSpec{}.rtol;
  double atol = ToleranceSpec{}.atol;
};

RunConfig make_config(const Globals& g) {
  RunConfig c;
  c.arch = arch_or_throw(g.arch);
  if (g.dtype) c.dtype = dtype_or_throw(*g.dtype);
  c.registry = resolve_registry_path(g.registry);
  c.executor = g.executor;
  c.planner = g.planner;
  c.seed = g.seed;
  c.deterministic = g.deterministic;
  c.template_dir = g.template_dir;
  c.tol = {g.rtol, g.atol};
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw RegistryError("cannot write " + p.string());
  out << text;
}

// Scratch directory for kernels awaiting insertion; removed on scope exit.
class Staging {
 public:
  explicit Staging(std::optional<std::string> dir) {
    if (dir) {
      path_ = *dir;
      keep_ = true;
    } else {
      std::random_device rd;
      path_ = fs::temp_directory_path() / fmt::format("ksynth-staging-{:016x}", (std::uint64_t{rd()} << 32) | rd());
    }
    fs::create_directories(path_);
  }
  ~Staging() {
    std::error_code ec;
    if (!keep_) fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool keep_ = false;
};

int report(const CommandStatus& r, std::ostream& err) {
  if (!r.message.empty()) err << r.message << "\n";
  return r.exit_code;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ksynth: offline synthesis of fused GPU kernels from computational-graph traces", "ksynth"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--registry", g.registry, "Registry directory (default $KSYNTH_REGISTRY, then ./registry)");
  app.add_option("--arch", g.arch, "Target architecture: sm80 | sm90")->capture_default_str();
  app.add_option("--dtype", g.dtype, "Force one dtype for every pattern (default: per-rule policy)");
  app.add_option("--executor", g.executor, "analytic | replay:<name|path> | external:<command>")->capture_default_str();
  app.add_option("--planner", g.planner, "builtin | external:<command>")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for sweeps and verification inputs")->capture_default_str();
  app.add_flag("--deterministic", g.deterministic, "Fixed timestamps in registry records");
  app.add_option("--template-dir", g.template_dir, "Override the shipped kernel templates");
  app.add_option("--rtol", g.rtol, "Verification relative tolerance")->capture_default_str();
  app.add_option("--atol", g.atol, "Verification absolute tolerance")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace | debug | info | warn | error | off")->capture_default_str();

  // discover
  auto* discover = app.add_subcommand("discover", "Propose fusable patterns in a trace");
  std::string d_trace;
  std::optional<std::string> d_out;
  discover->add_option("trace", d_trace, "Trace JSON")->required();
  discover->add_option("-o,--out", d_out, "Write the proposals document here (default stdout)");

  // realize
  auto* realize = app.add_subcommand("realize", "Emit, verify, tune and register kernels for proposals");
  std::string r_props;
  bool r_reuse = true;
  double r_threshold = 1.0;
  std::optional<std::string> r_space, r_report, r_staging;
  int r_attempts = 3, r_concurrency = 1;
  realize->add_option("proposals", r_props, "Proposals JSON from discover")->required();
  realize->add_flag("--reuse,!--no-reuse", r_reuse, "Skip synthesis on a registry hit (default on)");
  realize->add_option("--accept-threshold", r_threshold, "Minimum speedup to accept a tuned kernel")
      ->capture_default_str();
  realize->add_option("--space", r_space, "Search space for GEMM rules (default: shipped space for the arch)");
  realize->add_option("--max-attempts", r_attempts, "Emission attempts per pattern")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  realize->add_option("--concurrency", r_concurrency, "Executor concurrency during sweeps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  realize->add_option("--report", r_report, "Write the realize report JSON here (default stdout)");
  realize->add_option("--staging", r_staging, "Keep staged kernels in this directory");

  // compose
  auto* compose = app.add_subcommand("compose", "Rewrite a trace with registered kernels, verify and benchmark");
  std::string c_trace;
  ComposeOptions c_opts;
  std::string c_out = ".";
  std::optional<std::string> c_timings, c_mutation;
  compose->add_option("trace", c_trace, "Trace JSON")->required();
  compose->add_option("--out-dir", c_out, "Directory for the composed graph and reports")->capture_default_str();
  compose->add_option("--timings", c_timings, "Block timings JSON (default: shipped replay for the trace)");
  compose->add_option("--trials", c_opts.trials, "Verification seeds per desk setting")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  compose->add_option("--mutation", c_mutation, "Inject a named mutation fixture before verification");

  // registry
  auto* registry = app.add_subcommand("registry", "Inspect the kernel registry");
  registry->require_subcommand(1);
  auto* list = registry->add_subcommand("list", "List entries sorted by key");
  bool l_all = false, l_json = false;
  list->add_flag("--all", l_all, "Include superseded entries");
  list->add_flag("--json", l_json, "Emit JSON instead of a table");
  auto* query = registry->add_subcommand("query", "Entries accepted for a key");
  std::string q_rule, q_dtype, q_arch;
  std::optional<std::string> q_shapes;
  bool q_json = false;
  query->add_option("--rule", q_rule, "Rule tag, e.g. FMHA")->required();
  query->add_option("--dtype", q_dtype, "Data type, e.g. fp16")->required();
  query->add_option("--arch", q_arch, "Architecture, e.g. sm80")->required();
  query->add_option("--shapes", q_shapes, "Input shapes, e.g. 4096x4096,4096x4096");
  query->add_flag("--json", q_json, "Emit JSON instead of a table");
  auto* show = registry->add_subcommand("show", "Print one entry");
  std::string s_id;
  show->add_option("id", s_id, "Entry id")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  sink->set_pattern("[%l] %v");
  auto logger = std::make_shared<spdlog::logger>("ksynth", sink);
  const auto level = spdlog::level::from_str(g.log_level);
  if (level == spdlog::level::off && g.log_level != "off") {
    err << "ksynth: unknown log level '" << g.log_level << "'\n";
    return kExitInput;
  }
  logger->set_level(level);
  const auto previous = spdlog::default_logger();
  spdlog::set_default_logger(logger);
  struct Restore {
    std::shared_ptr<spdlog::logger> l;
    ~Restore() { spdlog::set_default_logger(l); }
  } restore{previous};

  RunConfig cfg;
  try {
    cfg = make_config(g);
  } catch (const ValidationError& e) {
    err << "ksynth: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*discover) {
      const auto r = run_discover(d_trace, cfg);
      if (r.exit_code == kExitOk || r.exit_code == kExitNoProposals) {
        const std::string doc = r.document.dump(2) + "\n";
        if (d_out) {
          write_file(*d_out, doc);
        } else {
          out << doc;
        }
      }
      return report(r, err);
    }
    if (*realize) {
      cfg.reuse = r_reuse;
      cfg.accept_threshold = r_threshold;
      cfg.space = r_space;
      cfg.max_attempts = r_attempts;
      cfg.concurrency = r_concurrency;
      Staging staging(r_staging);
      const auto r = run_realize(r_props, cfg, staging.path());
      const std::string doc = r.to_json().dump(2) + "\n";
      if (r_report) {
        write_file(*r_report, doc);
      } else {
        out << doc;
      }
      return report(r, err);
    }
    if (*compose) {
      c_opts.out_dir = c_out;
      if (c_timings) c_opts.timings = fs::path(*c_timings);
      c_opts.mutation = c_mutation;
      const auto r = run_compose(c_trace, cfg, c_opts);
      if (r.bench) out << r.bench->to_markdown();
      return report(r, err);
    }

    // registry subcommands
    const Registry reg(cfg.registry);
    if (*list) {
      const auto entries = reg.list(l_all);
      if (l_json) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& e : entries) arr.push_back(e.to_json());
        out << arr.dump(2) << "\n";
      } else {
        out << registry_table(entries);
      }
      return kExitOk;
    }
    if (*query) {
      const auto rule = parse_rule(q_rule);
      const auto dtype = parse_dtype(q_dtype);
      const auto arch = parse_arch(q_arch);
      if (!rule || !dtype || !arch) {
        err << "registry query: unknown key field: "
            << (!rule ? "rule '" + q_rule + "'" : !dtype ? "dtype '" + q_dtype + "'" : "arch '" + q_arch + "'") << "\n";
        return kExitInput;
      }
      std::optional<std::vector<Shape>> shapes;
      if (q_shapes) shapes = parse_shape_list(*q_shapes);
      auto entries = reg.query({*rule, *dtype, *arch}, shapes);
      std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
      if (q_json) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& e : entries) arr.push_back(e.to_json());
        out << arr.dump(2) << "\n";
      } else {
        out << registry_table(entries);
      }
      return kExitOk;
    }
    if (*show) {
      const auto e = reg.find(s_id);
      if (!e) {
        err << "registry show: no entry '" << s_id << "'\n";
        return kExitInput;
      }
      out << e->to_json().dump(2) << "\n";
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    err << "ksynth: " << e.what() << "\n";
    return kExitInput;
  } catch (const RegistryError& e) {
    err << "ksynth: registry failure: " << e.what() << "\n";
    return kExitInfra;
  } catch (const std::exception& e) {
    err << "ksynth: internal error: " << e.what() << "\n";
    return kExitInfra;
  }
  return kExitInput;
}

}  // namespace ksynth
