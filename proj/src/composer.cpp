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

#include "ksynth/composer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "ksynth/examples_index.hpp"
#include "ksynth/interpreter.hpp"

namespace ksynth {

namespace fs = std::filesystem;

namespace {

nlohmann::json attr_json(const AttrValue& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

nlohmann::json attrs_json(const Attrs& attrs) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : attrs) j[k] = attr_json(v);
  return j;
}

std::vector<std::string> sorted(const std::set<std::string>& s) { return {s.begin(), s.end()}; }

Node make_call(const CompGraph& g, const CallSite& site, const PatternMatch& m, const std::string& id) {
  const Node& out = g.at(m.output);
  Node n;
  n.id = id;
  n.kind = OpKind::kernel_call;
  std::vector<std::string> roles;
  for (const auto& [role, src] : m.roles) {
    roles.push_back(role);
    n.inputs.push_back(src);
  }
  FusedParams params = m.params;
  params.mutation = site.mutation;
  n.attrs["rule"] = std::string(to_string(site.rule));
  n.attrs["dtype"] = std::string(to_string(site.dtype));
  n.attrs["roles"] = roles;
  n.attrs["pattern_id"] = site.pattern_id;
  n.attrs["registry_id"] = site.registry_id;
  n.attrs["replaced"] = sorted(site.node_ids);
  params.to_attrs(n.attrs);
  n.raw_attrs = attrs_json(n.attrs);
  n.out_meta = out.out_meta;
  if (out.raw_shape.is_array()) {
    n.raw_shape = out.raw_shape;
  } else {
    n.raw_shape = out.out_meta.shape;
  }
  return n;
}

// Decimal text of x rounded half-up (away from zero on ties) at `places`.
std::string half_up_text(double x, int places) {
  std::string s = fmt::format("{:.12f}", std::fabs(x));
  const auto dot = s.find('.');
  std::string digits = s.substr(0, dot) + s.substr(dot + 1, static_cast<std::size_t>(places));
  const bool up = s[dot + 1 + static_cast<std::size_t>(places)] >= '5';
  if (up) {
    int i = static_cast<int>(digits.size()) - 1;
    while (i >= 0 && digits[static_cast<std::size_t>(i)] == '9') digits[static_cast<std::size_t>(i--)] = '0';
    if (i < 0) {
      digits.insert(digits.begin(), '1');
    } else {
      ++digits[static_cast<std::size_t>(i)];
    }
  }
  const std::size_t int_len = digits.size() - static_cast<std::size_t>(places);
  std::string out = digits.substr(0, int_len);
  if (places > 0) out += "." + digits.substr(int_len);
  return (x < 0 ? "-" : "") + out;
}

std::string ms_text(double v) { return nlohmann::json(v).dump(); }

}  // namespace

std::string kernel_call_id(const std::string& pattern_id) { return "kc_" + pattern_id; }

CallSite call_site(const ProposedPattern& p, const std::string& registry_id) {
  return {p.pattern_id, registry_id, p.rule, p.dtype, p.node_ids, p.params.mutation};
}

CompGraph rewrite(const CompGraph& g, const std::vector<ProposedPattern>& accepted,
                  const std::vector<std::string>& registry_ids) {
  if (registry_ids.size() != accepted.size()) throw CompositionError("one registry id per accepted pattern required");
  std::vector<CallSite> sites;
  for (std::size_t i = 0; i < accepted.size(); ++i) sites.push_back(call_site(accepted[i], registry_ids[i]));
  return rewrite(g, sites);
}

CompGraph rewrite(const CompGraph& g, const std::vector<CallSite>& sites) {
  std::map<std::string, std::string> owner;  // node id -> pattern id
  for (const auto& s : sites) {
    for (const auto& id : s.node_ids) {
      if (!g.find(id)) throw CompositionError("pattern " + s.pattern_id + ": unknown node '" + id + "'");
      auto [it, fresh] = owner.emplace(id, s.pattern_id);
      if (!fresh) {
        throw CompositionError("patterns " + it->second + " and " + s.pattern_id + " overlap at node '" + id + "'");
      }
    }
  }

  const auto consumers = g.consumers();
  const std::set<std::string> outputs(g.graph_outputs.begin(), g.graph_outputs.end());
  std::map<std::string, Node> calls;         // pattern output id -> call node
  std::map<std::string, std::string> rename;  // pattern output id -> call id
  for (const auto& s : sites) {
    // Checked before the rule match so the error names the stray consumer.
    const auto outs = boundary_outputs(g, s.node_ids);
    for (std::size_t i = 0; i + 1 < outs.size(); ++i) {
      if (outputs.count(outs[i])) throw CompositionError("dangling consumer: graph output '" + outs[i] + "' is replaced");
      for (const auto& c : consumers.at(outs[i])) {
        if (!s.node_ids.count(c)) {
          throw CompositionError("dangling consumer: node '" + c + "' uses replaced node '" + outs[i] + "'");
        }
      }
    }
    const auto m = analyze_pattern(g, s.rule, s.node_ids);
    if (!m) throw CompositionError("pattern " + s.pattern_id + " is not a " + std::string(to_string(s.rule)) + " instance");
    for (const auto& id : s.node_ids) {
      if (id == m->output) continue;
      if (outputs.count(id)) throw CompositionError("dangling consumer: graph output '" + id + "' is replaced");
      for (const auto& c : consumers.at(id)) {
        if (!s.node_ids.count(c)) {
          throw CompositionError("dangling consumer: node '" + c + "' uses replaced node '" + id + "'");
        }
      }
    }
    if (m->roles.size() != boundary_inputs(g, s.node_ids).size()) {
      throw CompositionError(fmt::format("pattern {}: {} roles for {} boundary inputs", s.pattern_id, m->roles.size(),
                                         boundary_inputs(g, s.node_ids).size()));
    }
    // A pattern output that is itself a graph output keeps its id.
    const std::string id = outputs.count(m->output) ? m->output : kernel_call_id(s.pattern_id);
    if (id != m->output && g.find(id)) throw CompositionError("node id '" + id + "' already exists");
    calls.emplace(m->output, make_call(g, s, *m, id));
    rename.emplace(m->output, id);
  }

  CompGraph out = g;
  out.nodes.clear();
  for (const auto& n : g.nodes) {
    if (auto it = calls.find(n.id); it != calls.end()) {
      out.nodes.push_back(it->second);
      continue;
    }
    if (owner.count(n.id)) continue;
    Node copy = n;
    for (auto& in : copy.inputs) {
      if (auto r = rename.find(in); r != rename.end()) in = r->second;
    }
    out.nodes.push_back(std::move(copy));
  }
  try {
    topo_sort(out);
    validate_structure(out);
    out = infer_shapes(out);
  } catch (const ValidationError& e) {
    throw CompositionError(std::string("rewritten graph is invalid: ") + e.what());
  }
  for (const auto& [orig, call] : calls) {
    if (out.at(call.id).out_meta != g.at(orig).out_meta) {
      throw CompositionError("kernel_call '" + call.id + "' changes the output meta of '" + orig + "'");
    }
  }
  for (const auto* ids : {&g.graph_inputs, &g.graph_outputs}) {
    for (const auto& id : *ids) {
      if (out.at(id).out_meta != g.at(id).out_meta) throw CompositionError("interface tensor '" + id + "' changed");
    }
  }
  return out;
}

std::vector<CallSite> call_sites(const CompGraph& rewritten) {
  std::vector<CallSite> out;
  for (const auto& n : rewritten.nodes) {
    if (n.kind != OpKind::kernel_call) continue;
    CallSite s;
    s.pattern_id = n.attr_str("pattern_id");
    s.registry_id = n.has_attr("registry_id") ? n.attr_str("registry_id") : "";
    s.rule = rule_or_throw(n.attr_str("rule"));
    s.dtype = dtype_or_throw(n.attr_str("dtype"));
    const auto& replaced = n.attr_strs("replaced");
    s.node_ids = {replaced.begin(), replaced.end()};
    s.mutation = FusedParams::from_attrs(n).mutation;
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t inject_mutation(CompGraph& rewritten, RuleTag rule, FusedMutation m) {
  std::size_t n = 0;
  for (auto& node : rewritten.nodes) {
    if (node.kind != OpKind::kernel_call || node.attr_str("rule") != to_string(rule)) continue;
    node.attrs["mutation"] = std::string(to_string(m));
    node.raw_attrs["mutation"] = std::string(to_string(m));
    ++n;
  }
  return n;
}

nlohmann::ordered_json CompositionReport::to_json() const {
  auto checks = [](const std::vector<OutputCheck>& cs) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& o : cs) {
      arr.push_back({{"id", o.id},
                     {"pass", o.close.pass},
                     {"max_abs_diff", o.close.max_abs_diff},
                     {"worst_index", o.close.worst_index},
                     {"failures", o.close.failures}});
    }
    return arr;
  };
  nlohmann::ordered_json j;
  j["pass"] = pass;
  j["seed"] = seed;
  j["rtol"] = tol.rtol;
  j["atol"] = tol.atol;
  j["dims"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : dims) j["dims"][k] = v;
  j["kernels"] = checks(kernels);
  j["outputs"] = checks(outputs);
  return j;
}

CompositionReport verify_composed(const CompGraph& original, const CompGraph& rewritten, const DimBindings& dims,
                                  const ToleranceSpec& tol, std::uint64_t seed) {
  const CompGraph orig = dims.empty() ? original : rebind_dims(original, dims);
  const std::vector<CallSite> sites = call_sites(rewritten);
  const CompGraph comp = dims.empty() ? rewritten : rewrite(orig, sites);

  const ValueMap leaves = make_leaf_values(orig, seed);
  const ValueMap got = eval_all(comp, leaves, seed);

  // Where each replaced output lives in the composed graph.
  std::map<std::string, std::string> renamed;
  std::vector<std::pair<std::string, std::string>> checks;  // (call id, original output id)
  for (const auto& n : comp.nodes) {
    if (n.kind != OpKind::kernel_call) continue;
    const auto& replaced = n.attr_strs("replaced");
    const auto outs = boundary_outputs(orig, {replaced.begin(), replaced.end()});
    if (outs.size() != 1) throw CompositionError("kernel_call '" + n.id + "' does not replace a single-output subgraph");
    renamed[outs[0]] = n.id;
    checks.emplace_back(n.id, outs[0]);
  }

  EvalOptions ref_opts;
  for (const auto& s : sites) {
    for (const auto& id : s.node_ids) {
      for (const auto& in : orig.at(id).inputs) {
        if (s.node_ids.count(in)) continue;
        auto r = renamed.find(in);
        ref_opts.edge_values[{id, in}] = got.at(r == renamed.end() ? in : r->second);
        ref_opts.edge_casts[{id, in}] = s.dtype;
      }
    }
  }
  const ValueMap want = eval_all(orig, leaves, seed, ref_opts);

  CompositionReport r;
  r.seed = seed;
  r.tol = tol;
  r.dims = orig.dims;
  for (const auto& [call, out] : checks) {
    OutputCheck c{call, allclose(got.at(call), want.at(out), tol)};
    r.pass = r.pass && c.close.pass;
    r.kernels.push_back(std::move(c));
  }
  for (const auto& id : orig.graph_outputs) {
    OutputCheck c{id, allclose(got.at(id), want.at(id), tol)};
    r.pass = r.pass && c.close.pass;
    r.outputs.push_back(std::move(c));
  }
  return r;
}

std::vector<Variant> ablate(const CompGraph& g, const std::vector<CallSite>& accepted) {
  std::vector<Variant> out;
  out.push_back({"baseline", {}, g});
  if (accepted.empty()) return out;
  if (accepted.size() >= 2) {
    std::vector<const CallSite*> by_rule;
    for (const auto& s : accepted) by_rule.push_back(&s);
    std::stable_sort(by_rule.begin(), by_rule.end(), [](auto* a, auto* b) { return a->rule < b->rule; });
    for (const auto* s : by_rule) {
      out.push_back({std::string(to_string(s->rule)) + "-only", {s->pattern_id}, rewrite(g, {*s})});
    }
  }
  std::vector<std::string> ids;
  for (const auto& s : accepted) ids.push_back(s.pattern_id);
  out.push_back({"all", ids, rewrite(g, accepted)});
  return out;
}

BlockTimings BlockTimings::from_json(const nlohmann::json& j) {
  BlockTimings t;
  try {
    t.block = j.at("block").get<std::string>();
    t.source = j.value("source", std::string());
    for (const auto& v : j.at("variants")) t.variants_ms[v.at("label").get<std::string>()] = v.at("mean_ms").get<double>();
    for (const auto& c : j.value("compiler_baselines", nlohmann::json::array())) {
      t.compilers.push_back({c.at("name").get<std::string>(), c.at("mean_ms").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CompositionError(std::string("malformed block timings: ") + e.what());
  }
  return t;
}

BlockTimings BlockTimings::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CompositionError("cannot read block timings " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw CompositionError("cannot parse " + path.string() + ": " + e.what());
  }
}

fs::path block_replay_path(const std::string& trace_name) {
  return fs::path(data_dir()) / "replay" / "blocks" / (trace_name + ".json");
}

double round_half_up(double x, int places) { return std::stod(half_up_text(x, places)); }

const VariantTiming& BenchReport::at(const std::string& label) const {
  for (const auto& v : variants) {
    if (v.label == label) return v;
  }
  throw CompositionError("no variant '" + label + "' in report");
}

BenchReport bench_report(const std::vector<Variant>& variants, const BlockTimings& timings) {
  BenchReport r;
  r.block = timings.block;
  r.source = timings.source;
  r.compilers = timings.compilers;
  auto ms = [&](const std::string& label) {
    auto it = timings.variants_ms.find(label);
    if (it == timings.variants_ms.end()) throw CompositionError("missing timing for variant '" + label + "'");
    if (!(it->second > 0)) throw CompositionError("non-positive timing for variant '" + label + "'");
    return it->second;
  };
  const double base = ms("baseline");
  for (const auto& v : variants) {
    const double t = ms(v.label);
    r.variants.push_back({v.label, v.pattern_ids, t, v.label == "baseline" ? 1.0 : base / t});
  }
  return r;
}

nlohmann::ordered_json BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["block"] = block;
  if (!source.empty()) j["source"] = source;
  j["variants"] = nlohmann::ordered_json::array();
  for (const auto& v : variants) {
    j["variants"].push_back({{"variant", v.label},
                             {"patterns", v.pattern_ids},
                             {"mean_ms", v.mean_ms},
                             {"speedup", round_half_up(v.speedup, 2)},
                             {"speedup_exact", v.speedup}});
  }
  j["compiler_baselines"] = nlohmann::ordered_json::array();
  for (const auto& c : compilers) j["compiler_baselines"].push_back({{"name", c.name}, {"mean_ms", c.mean_ms}});
  return j;
}

std::string BenchReport::to_markdown() const {
  std::ostringstream os;
  os << "| variant | mean_ms | speedup |\n|---|---:|---:|\n";
  for (const auto& v : variants) {
    os << "| " << v.label << " | " << ms_text(v.mean_ms) << " | " << half_up_text(v.speedup, 2) << " |\n";
  }
  if (!compilers.empty()) {
    os << "\nCompiler baselines (reported, not measured here):\n\n| compiler | mean_ms |\n|---|---:|\n";
    for (const auto& c : compilers) os << "| " << c.name << " | " << ms_text(c.mean_ms) << " |\n";
  }
  return os.str();
}

std::vector<MutationFixture> load_mutation_fixtures(const fs::path& dir_in) {
  const fs::path dir = dir_in.empty() ? fs::path(data_dir()) / "mutations" : dir_in;
  std::vector<MutationFixture> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".json") continue;
    std::ifstream in(e.path());
    try {
      const auto j = nlohmann::json::parse(in);
      MutationFixture f;
      f.name = j.at("name").get<std::string>();
      f.trace = j.at("trace").get<std::string>();
      f.arch = arch_or_throw(j.at("arch").get<std::string>());
      f.rule = rule_or_throw(j.at("rule").get<std::string>());
      const auto m = parse_mutation(j.at("mutation").get<std::string>());
      if (!m) throw CompositionError("unknown mutation in " + e.path().string());
      f.mutation = *m;
      f.description = j.value("description", std::string());
      out.push_back(std::move(f));
    } catch (const nlohmann::json::exception& ex) {
      throw CompositionError("malformed mutation fixture " + e.path().string() + ": " + ex.what());
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

}  // namespace ksynth
