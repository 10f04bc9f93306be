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

#include "ksynth/discovery.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "ksynth/trace.hpp"

namespace ksynth {
namespace {

class GraphView {
 public:
  explicit GraphView(const CompGraph& g)
      : g_(g), users_(g.consumers()), outputs_(g.graph_outputs.begin(), g.graph_outputs.end()) {}

  const CompGraph& graph() const { return g_; }
  const Node* node(const std::string& id) const { return g_.find(id); }

  const Node* input(const Node& n, std::size_t i) const {
    return i < n.inputs.size() ? g_.find(n.inputs[i]) : nullptr;
  }

  /// The unique consumer of id, if it has exactly one and is not a graph output.
  const Node* sole_user(const std::string& id) const {
    const auto& us = users_.at(id);
    if (us.size() != 1 || outputs_.count(id)) return nullptr;
    return g_.find(us.front());
  }

  bool escapes(const std::string& id, const std::set<std::string>& inside) const {
    if (outputs_.count(id)) return true;
    for (const auto& u : users_.at(id)) {
      if (!inside.count(u)) return true;
    }
    return false;
  }

 private:
  const CompGraph& g_;
  std::map<std::string, std::vector<std::string>> users_;
  std::set<std::string> outputs_;
};

bool is(const Node* n, OpKind k) { return n && n->kind == k; }

bool has_perm(const Node* n, const std::vector<std::int64_t>& perm) {
  return is(n, OpKind::transpose) && n->attr_ints("perm") == perm;
}

bool is_last_axis(const Node& n, const char* key, std::int64_t fallback) {
  const auto axis = n.attr_int_or(key, fallback);
  return axis == -1 || axis == static_cast<std::int64_t>(n.out_meta.rank()) - 1;
}

/// Only `output` may be observed outside the set.
bool sealed(const GraphView& v, const std::set<std::string>& ids, const std::string& output) {
  for (const auto& id : ids) {
    if (id != output && v.escapes(id, ids)) return false;
  }
  return true;
}

/// Orders roles by first use among the boundary inputs and checks that the
/// roles cover the boundary exactly.
std::optional<RoleBinding> bind_roles(const CompGraph& g, const std::set<std::string>& ids,
                                      const std::map<std::string, std::string>& by_role) {
  const auto boundary = boundary_inputs(g, ids);
  std::map<std::string, std::string> role_of;
  for (const auto& [role, id] : by_role) {
    if (!role_of.emplace(id, role).second) return std::nullopt;  // one tensor, two roles
  }
  if (role_of.size() != boundary.size()) return std::nullopt;
  RoleBinding out;
  for (const auto& id : boundary) {
    auto it = role_of.find(id);
    if (it == role_of.end()) return std::nullopt;
    out.emplace_back(it->second, id);
  }
  return out;
}

// ---- GEMM family ---------------------------------------------------------

std::optional<PatternMatch> gemm_at(const GraphView& v, const Node& mm) {
  const CompGraph& g = v.graph();
  PatternMatch m;
  if (mm.kind == OpKind::matmul) {
    const Shape& a = g.at(mm.inputs[0]).out_meta.shape;
    const Shape& b = g.at(mm.inputs[1]).out_meta.shape;
    if (a.size() != 2 || b.size() != 2) return std::nullopt;
    const std::int64_t M = a[0], K = a[1], N = b[1];
    m.rule = K >= kStreamKRatio * std::max(M, N) ? RuleTag::GEMM_StreamK : RuleTag::GEMM;
  } else if (mm.kind == OpKind::batched_matmul) {
    if (g.at(mm.inputs[0]).out_meta.rank() != 3 || g.at(mm.inputs[1]).out_meta.rank() != 3) return std::nullopt;
    m.rule = RuleTag::BatchedGEMM;
  } else {
    return std::nullopt;
  }
  if (mm.inputs[0] == mm.inputs[1]) return std::nullopt;
  m.node_ids = {mm.id};
  m.output = mm.id;
  m.roles = {{"A", mm.inputs[0]}, {"B", mm.inputs[1]}};
  return m;
}

// ---- attention -----------------------------------------------------------

struct HeadBranch {
  const Node* proj = nullptr;  // the projection linear
  std::int64_t split_index = -1;
  std::int64_t heads = 0;
  std::int64_t head_dim = 0;
  std::int64_t repeats = 1;
};

/// Walks [repeat_interleave] <- transpose(0,2,1,3) <- reshape[B,T,h,d] <- [split] <- linear.
std::optional<HeadBranch> head_branch(const GraphView& v, const Node* n, std::set<std::string>& ids) {
  HeadBranch hb;
  if (is(n, OpKind::repeat_interleave)) {
    if (n->attr_int("axis") != 1) return std::nullopt;
    hb.repeats = n->attr_int("repeats");
    ids.insert(n->id);
    n = v.input(*n, 0);
  }
  if (!has_perm(n, {0, 2, 1, 3})) return std::nullopt;
  ids.insert(n->id);
  const Node* rs = v.input(*n, 0);
  if (!is(rs, OpKind::reshape) || rs->out_meta.rank() != 4) return std::nullopt;
  ids.insert(rs->id);
  hb.heads = rs->out_meta.shape[2];
  hb.head_dim = rs->out_meta.shape[3];
  const Node* p = v.input(*rs, 0);
  if (is(p, OpKind::split)) {
    if (!is_last_axis(*p, "axis", -1) || p->attr_int("parts") != 3) return std::nullopt;
    hb.split_index = p->attr_int("index");
    ids.insert(p->id);
    p = v.input(*p, 0);
  }
  if (!is(p, OpKind::linear)) return std::nullopt;
  ids.insert(p->id);
  hb.proj = p;
  return hb;
}

std::optional<PatternMatch> attention_at(const GraphView& v, const Node& sm) {
  if (sm.kind != OpKind::softmax || sm.out_meta.rank() != 4 || !is_last_axis(sm, "axis", -1)) return std::nullopt;
  std::set<std::string> ids{sm.id};
  PatternMatch m;

  // Backwards: scale and optional causal mask, in either order.
  const Node* cur = v.input(sm, 0);
  bool have_scale = false;
  for (int step = 0; step < 2 && cur; ++step) {
    if (is(cur, OpKind::causal_mask) && !m.params.causal) {
      m.params.causal = true;
    } else if (is(cur, OpKind::scale) && !have_scale) {
      have_scale = true;
      m.params.scale = cur->attr_double("factor");
    } else {
      break;
    }
    ids.insert(cur->id);
    cur = v.input(*cur, 0);
  }
  if (!have_scale || !is(cur, OpKind::batched_matmul)) return std::nullopt;
  const Node* qk = cur;
  ids.insert(qk->id);
  const Node* kt = v.input(*qk, 1);
  if (!has_perm(kt, {0, 1, 3, 2})) return std::nullopt;
  ids.insert(kt->id);

  // Forwards: optional dropout, then the PV product.
  const Node* probs = &sm;
  const Node* pv = v.sole_user(sm.id);
  if (is(pv, OpKind::dropout_eval)) {
    ids.insert(pv->id);
    probs = pv;
    pv = v.sole_user(pv->id);
  }
  if (!is(pv, OpKind::batched_matmul) || pv->inputs[0] != probs->id) return std::nullopt;
  ids.insert(pv->id);

  auto q = head_branch(v, v.input(*qk, 0), ids);
  auto k = head_branch(v, v.input(*kt, 0), ids);
  auto val = head_branch(v, v.input(*pv, 1), ids);
  if (!q || !k || !val) return std::nullopt;
  if (q->repeats != 1 || k->repeats != val->repeats || k->heads != val->heads) return std::nullopt;
  if (q->head_dim != k->head_dim || k->head_dim != val->head_dim) return std::nullopt;
  if (k->heads * k->repeats != q->heads) return std::nullopt;

  // Output side: transpose -> reshape [B,T,C] -> linear -> [dropout].
  const Node* ct = v.sole_user(pv->id);
  if (!has_perm(ct, {0, 2, 1, 3})) return std::nullopt;
  ids.insert(ct->id);
  const Node* cr = v.sole_user(ct->id);
  if (!is(cr, OpKind::reshape) || cr->out_meta.rank() != 3) return std::nullopt;
  ids.insert(cr->id);
  const Node* out = v.sole_user(cr->id);
  if (!is(out, OpKind::linear) || out->inputs[0] != cr->id) return std::nullopt;
  const Node* proj_o = out;
  ids.insert(out->id);
  if (const Node* d = v.sole_user(out->id); is(d, OpKind::dropout_eval)) {
    ids.insert(d->id);
    out = d;
  }

  std::map<std::string, std::string> roles;
  const bool packed = q->split_index >= 0;
  if (packed) {
    if (k->proj != q->proj || val->proj != q->proj) return std::nullopt;
    if (q->split_index != 0 || k->split_index != 1 || val->split_index != 2) return std::nullopt;
    roles["x"] = q->proj->inputs[0];
    roles["w_qkv"] = q->proj->inputs[1];
    if (q->proj->inputs.size() > 2) roles["b_qkv"] = q->proj->inputs[2];
  } else {
    if (k->split_index >= 0 || val->split_index >= 0) return std::nullopt;
    if (q->proj == k->proj || q->proj == val->proj || k->proj == val->proj) return std::nullopt;
    const std::string& x = q->proj->inputs[0];
    if (k->proj->inputs[0] != x || val->proj->inputs[0] != x) return std::nullopt;
    roles["x"] = x;
    const std::pair<const char*, const Node*> projs[] = {{"q", q->proj}, {"k", k->proj}, {"v", val->proj}};
    for (const auto& [tag, p] : projs) {
      roles[std::string("w_") + tag] = p->inputs[1];
      if (p->inputs.size() > 2) roles[std::string("b_") + tag] = p->inputs[2];
    }
  }
  roles["w_o"] = proj_o->inputs[1];
  if (proj_o->inputs.size() > 2) roles["b_o"] = proj_o->inputs[2];

  if (!sealed(v, ids, out->id)) return std::nullopt;
  auto bound = bind_roles(v.graph(), ids, roles);
  if (!bound) return std::nullopt;

  m.rule = k->repeats > 1 ? RuleTag::FMHA_GQA : RuleTag::FMHA;
  m.node_ids = std::move(ids);
  m.roles = std::move(*bound);
  m.output = out->id;
  m.params.num_heads = q->heads;
  m.params.kv_heads = k->heads;
  m.params.head_dim = q->head_dim;
  m.params.packed_qkv = packed;
  return m;
}

// ---- MLPs ----------------------------------------------------------------

/// Extends a match through an optional trailing dropout.
const Node* trailing_dropout(const GraphView& v, const Node* last, std::set<std::string>& ids) {
  if (const Node* d = v.sole_user(last->id); is(d, OpKind::dropout_eval)) {
    ids.insert(d->id);
    return d;
  }
  return last;
}

std::optional<PatternMatch> gelu_mlp_at(const GraphView& v, const Node& act) {
  if (act.kind != OpKind::gelu) return std::nullopt;
  const Node* l1 = v.input(act, 0);
  if (!is(l1, OpKind::linear) || v.sole_user(l1->id) != &act) return std::nullopt;
  const Node* l2 = v.sole_user(act.id);
  if (!is(l2, OpKind::linear) || l2->inputs[0] != act.id) return std::nullopt;
  std::set<std::string> ids{l1->id, act.id, l2->id};
  const Node* out = trailing_dropout(v, l2, ids);

  std::map<std::string, std::string> roles{{"x", l1->inputs[0]}, {"w1", l1->inputs[1]}, {"w2", l2->inputs[1]}};
  if (l1->inputs.size() > 2) roles["b1"] = l1->inputs[2];
  if (l2->inputs.size() > 2) roles["b2"] = l2->inputs[2];
  if (!sealed(v, ids, out->id)) return std::nullopt;
  auto bound = bind_roles(v.graph(), ids, roles);
  if (!bound) return std::nullopt;
  PatternMatch m;
  m.rule = RuleTag::MLP_GELU;
  m.node_ids = std::move(ids);
  m.roles = std::move(*bound);
  m.output = out->id;
  return m;
}

std::optional<PatternMatch> swiglu_at(const GraphView& v, const Node& act) {
  if (act.kind != OpKind::silu) return std::nullopt;
  const Node* gate = v.input(act, 0);
  if (!is(gate, OpKind::linear) || gate->inputs.size() != 2 || v.sole_user(gate->id) != &act) return std::nullopt;
  const Node* mul = v.sole_user(act.id);
  if (!is(mul, OpKind::mul)) return std::nullopt;
  const std::string& other = mul->inputs[0] == act.id ? mul->inputs[1] : mul->inputs[0];
  const Node* up = v.node(other);
  if (!is(up, OpKind::linear) || up->inputs.size() != 2 || up == gate) return std::nullopt;
  if (up->inputs[0] != gate->inputs[0] || v.sole_user(up->id) != mul) return std::nullopt;
  if (up->out_meta.shape != gate->out_meta.shape) return std::nullopt;
  const Node* down = v.sole_user(mul->id);
  if (!is(down, OpKind::linear) || down->inputs.size() != 2 || down->inputs[0] != mul->id) return std::nullopt;
  std::set<std::string> ids{gate->id, act.id, up->id, mul->id, down->id};
  const Node* out = trailing_dropout(v, down, ids);

  const std::map<std::string, std::string> roles{
      {"x", gate->inputs[0]}, {"w_gate", gate->inputs[1]}, {"w_up", up->inputs[1]}, {"w_down", down->inputs[1]}};
  if (!sealed(v, ids, out->id)) return std::nullopt;
  auto bound = bind_roles(v.graph(), ids, roles);
  if (!bound) return std::nullopt;
  PatternMatch m;
  m.rule = RuleTag::MLP_SwiGLU;
  m.node_ids = std::move(ids);
  m.roles = std::move(*bound);
  m.output = out->id;
  return m;
}

std::optional<PatternMatch> match_at(const GraphView& v, RuleTag rule, const Node& anchor) {
  std::optional<PatternMatch> m;
  switch (rule) {
    case RuleTag::GEMM:
    case RuleTag::BatchedGEMM:
    case RuleTag::GEMM_StreamK:
      m = gemm_at(v, anchor);
      break;
    case RuleTag::FMHA:
    case RuleTag::FMHA_GQA:
      m = attention_at(v, anchor);
      break;
    case RuleTag::MLP_GELU:
      m = gelu_mlp_at(v, anchor);
      break;
    case RuleTag::MLP_SwiGLU:
      m = swiglu_at(v, anchor);
      break;
  }
  if (m && m->rule != rule) return std::nullopt;
  return m;
}

std::size_t first_position(const CompGraph& g, const std::set<std::string>& ids) {
  std::size_t best = g.nodes.size();
  for (const auto& id : ids) best = std::min(best, g.index_of(id).value_or(g.nodes.size()));
  return best;
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

std::string_view rule_title(RuleTag r) {
  switch (r) {
    case RuleTag::GEMM: return "Tensor-Core GEMM";
    case RuleTag::BatchedGEMM: return "Tensor-Core Batched GEMM";
    case RuleTag::GEMM_StreamK: return "Stream-K GEMM";
    case RuleTag::FMHA: return "Fused Multi-Head Attention";
    case RuleTag::FMHA_GQA: return "Grouped-Query Fused Attention";
    case RuleTag::MLP_GELU: return "GELU MLP";
    case RuleTag::MLP_SwiGLU: return "SwiGLU MLP";
  }
  return "";
}

std::string grid_schedule(RuleTag r, Arch arch) {
  switch (r) {
    case RuleTag::BatchedGEMM:
      return arch == Arch::SM80 ? "Batched (kBatched) 2D tiling" : "Ptr-Array batched 2D tiling";
    case RuleTag::GEMM_StreamK:
      return "Stream-K partitioned K loop with fixup";
    case RuleTag::FMHA:
    case RuleTag::FMHA_GQA:
      return "Per-(batch, head, query-block) tiling";
    default:
      return "Data-parallel 2D tiling";
  }
}

std::string tensor_core_note(Arch arch, DType dtype) {
  const std::string dt = upper(to_string(dtype));
  if (dtype == DType::fp32) return "FP32 SIMT cores, no tensor-core instruction";
  if (arch == Arch::SM80) {
    return dt + " tensor cores, inst shape " + (dtype == DType::tf32 ? "16x16x16" : "16x8x16");
  }
  return dt + " tensor cores, inst shape " + (dtype == DType::tf32 ? "16x16x8" : "16x16x32");
}

nlohmann::ordered_json params_json(const FusedParams& p) {
  nlohmann::ordered_json j;
  j["num_heads"] = p.num_heads;
  j["kv_heads"] = p.kv_heads;
  j["head_dim"] = p.head_dim;
  j["scale"] = p.scale;
  j["causal"] = p.causal;
  j["packed_qkv"] = p.packed_qkv;
  j["keys_per_block"] = p.keys_per_block;
  j["k_splits"] = p.k_splits;
  return j;
}

FusedParams params_from_json(const nlohmann::ordered_json& j) {
  FusedParams p;
  p.num_heads = j.value("num_heads", p.num_heads);
  p.kv_heads = j.value("kv_heads", p.kv_heads);
  p.head_dim = j.value("head_dim", p.head_dim);
  p.scale = j.value("scale", p.scale);
  p.causal = j.value("causal", p.causal);
  p.packed_qkv = j.value("packed_qkv", p.packed_qkv);
  p.keys_per_block = j.value("keys_per_block", p.keys_per_block);
  p.k_splits = j.value("k_splits", p.k_splits);
  return p;
}

bool same_params(const FusedParams& a, const FusedParams& b) {
  return a.num_heads == b.num_heads && a.kv_heads == b.kv_heads && a.head_dim == b.head_dim &&
         a.causal == b.causal && a.packed_qkv == b.packed_qkv && std::abs(a.scale - b.scale) <= 1e-12 * std::abs(b.scale);
}

}  // namespace

std::vector<PatternMatch> find_matches(const CompGraph& g, RuleTag rule) {
  const GraphView v(g);
  std::vector<PatternMatch> out;
  for (const auto& n : g.nodes) {
    if (auto m = match_at(v, rule, n)) out.push_back(std::move(*m));
  }
  return out;
}

std::vector<std::set<std::string>> match_rule(const CompGraph& g, RuleTag rule) {
  std::vector<std::set<std::string>> out;
  for (auto& m : find_matches(g, rule)) out.push_back(std::move(m.node_ids));
  return out;
}

std::optional<PatternMatch> analyze_pattern(const CompGraph& g, RuleTag rule, const std::set<std::string>& ids) {
  for (const auto& id : ids) {
    if (!g.find(id)) return std::nullopt;
  }
  const GraphView v(g);
  for (const auto& id : ids) {
    if (auto m = match_at(v, rule, g.at(id)); m && m->node_ids == ids) return m;
  }
  return std::nullopt;
}

std::int64_t flop_estimate(const CompGraph& g, const std::set<std::string>& ids) {
  std::int64_t total = 0;
  for (const auto& n : g.nodes) {
    if (!ids.count(n.id)) continue;
    const std::int64_t elems = n.out_meta.numel();
    switch (n.kind) {
      case OpKind::matmul:
      case OpKind::batched_matmul:
        total += 2 * elems * g.at(n.inputs[0]).out_meta.shape.back();
        break;
      case OpKind::linear:
        total += 2 * elems * g.at(n.inputs[1]).out_meta.shape[0];
        if (n.inputs.size() > 2) total += elems;
        break;
      case OpKind::add:
      case OpKind::mul:
      case OpKind::scale:
      case OpKind::gelu:
      case OpKind::silu:
      case OpKind::causal_mask:
        total += elems;
        break;
      case OpKind::softmax:
      case OpKind::layernorm:
      case OpKind::rmsnorm:
        total += 5 * elems;
        break;
      default:
        break;
    }
  }
  return total;
}

nlohmann::ordered_json PatternDescriptor::to_json() const {
  nlohmann::ordered_json j;
  j["pattern_id"] = pattern_id;
  j["name"] = name;
  j["optimization_rule"] = optimization_rule;
  j["target_architecture"] = target_architecture;
  nlohmann::ordered_json shapes = nlohmann::ordered_json::object();
  for (const auto& [role, s] : input_shapes) shapes[role] = s;
  j["input_shapes"] = shapes;
  j["data_type"] = data_type;
  if (computation_precision) j["computation_precision"] = *computation_precision;
  j["implementation_notes"] = {{"pipelining", implementation_notes.pipelining},
                               {"grid_schedule", implementation_notes.grid_schedule},
                               {"tensor_cores", implementation_notes.tensor_cores}};
  j["supporting_example"] = supporting_example;
  return j;
}

PatternDescriptor PatternDescriptor::from_json(const nlohmann::ordered_json& j) {
  try {
    PatternDescriptor d;
    d.pattern_id = j.at("pattern_id").get<std::string>();
    d.name = j.at("name").get<std::string>();
    d.optimization_rule = j.at("optimization_rule").get<std::string>();
    d.target_architecture = j.at("target_architecture").get<std::string>();
    for (const auto& [role, s] : j.at("input_shapes").items()) d.input_shapes.emplace_back(role, s.get<Shape>());
    d.data_type = j.at("data_type").get<std::string>();
    if (auto it = j.find("computation_precision"); it != j.end()) d.computation_precision = it->get<std::string>();
    const auto& notes = j.at("implementation_notes");
    d.implementation_notes = {notes.at("pipelining").get<std::string>(), notes.at("grid_schedule").get<std::string>(),
                              notes.at("tensor_cores").get<std::string>()};
    d.supporting_example = j.at("supporting_example").get<std::string>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("pattern descriptor: ") + e.what());
  }
}

nlohmann::ordered_json ProposedPattern::to_json() const {
  nlohmann::ordered_json j;
  j["pattern_id"] = pattern_id;
  j["rule"] = std::string(to_string(rule));
  j["arch"] = std::string(to_string(arch));
  j["dtype"] = std::string(to_string(dtype));
  j["priority_rank"] = priority_rank;
  j["score"] = score;
  j["node_ids"] = std::vector<std::string>(node_ids.begin(), node_ids.end());
  nlohmann::ordered_json roles_j = nlohmann::ordered_json::object();
  for (const auto& [role, id] : roles) roles_j[role] = id;
  j["roles"] = roles_j;
  j["output"] = output;
  j["params"] = params_json(params);
  j["supporting_examples"] = supporting_examples;
  j["descriptor"] = descriptor.to_json();
  return j;
}

ProposedPattern ProposedPattern::from_json(const nlohmann::ordered_json& j) {
  try {
    ProposedPattern p;
    p.pattern_id = j.at("pattern_id").get<std::string>();
    p.rule = rule_or_throw(j.at("rule").get<std::string>());
    p.arch = arch_or_throw(j.at("arch").get<std::string>());
    p.dtype = dtype_or_throw(j.at("dtype").get<std::string>());
    p.priority_rank = j.at("priority_rank").get<int>();
    p.score = j.at("score").get<std::int64_t>();
    for (const auto& id : j.at("node_ids")) p.node_ids.insert(id.get<std::string>());
    if (auto it = j.find("roles"); it != j.end()) {
      for (const auto& [role, id] : it->items()) p.roles.emplace_back(role, id.get<std::string>());
    }
    p.output = j.value("output", std::string());
    if (auto it = j.find("params"); it != j.end()) p.params = params_from_json(*it);
    p.supporting_examples = j.value("supporting_examples", std::vector<std::string>{});
    p.descriptor = PatternDescriptor::from_json(j.at("descriptor"));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("proposed pattern: ") + e.what());
  }
}

DType default_dtype(RuleTag rule, Arch arch) {
  if (arch == Arch::SM80 && (rule == RuleTag::GEMM || rule == RuleTag::BatchedGEMM)) return DType::tf32;
  return DType::fp16;
}

PatternDescriptor make_descriptor(const CompGraph& g, const PatternMatch& m, Arch arch, DType dtype,
                                  const std::string& pattern_id, const std::string& supporting_example) {
  PatternDescriptor d;
  d.pattern_id = pattern_id;
  d.name = std::string(arch_family(arch)) + " " + upper(to_string(dtype)) + " " + std::string(rule_title(m.rule));
  d.optimization_rule = std::string(to_string(m.rule));
  d.target_architecture = std::string(to_string(arch)) + " (" + std::string(arch_family(arch)) + ")";
  for (const auto& [role, id] : m.roles) d.input_shapes.emplace_back(role, g.at(id).out_meta.shape);
  d.data_type = std::string(to_string(dtype));
  if (dtype == DType::fp16 || dtype == DType::bf16) {
    d.computation_precision = std::string(to_string(dtype)) + " with fp32 accumulator";
  }
  d.implementation_notes.pipelining =
      arch == Arch::SM80 ? "Multistage cp.async pipeline" : "Warp-specialized pipeline with TMA";
  d.implementation_notes.grid_schedule = grid_schedule(m.rule, arch);
  d.implementation_notes.tensor_cores = tensor_core_note(arch, dtype);
  d.supporting_example = supporting_example;
  return d;
}

std::vector<ProposedPattern> propose_patterns(const CompGraph& g, Arch arch, std::optional<DType> dtype_override,
                                              const ExampleCatalog& catalog) {
  struct Candidate {
    PatternMatch match;
    std::int64_t score;
    std::size_t position;
    std::size_t rule_order;
  };
  std::vector<Candidate> cands;
  for (std::size_t r = 0; r < kAllRules.size(); ++r) {
    for (auto& m : find_matches(g, kAllRules[r])) {
      const auto score = flop_estimate(g, m.node_ids);
      const auto pos = first_position(g, m.node_ids);
      cands.push_back({std::move(m), score, pos, r});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.position != b.position) return a.position < b.position;
    return a.rule_order < b.rule_order;
  });
  std::set<std::string> taken;
  std::vector<ProposedPattern> out;
  for (auto& c : cands) {
    const bool overlaps =
        std::any_of(c.match.node_ids.begin(), c.match.node_ids.end(), [&](const auto& id) { return taken.count(id); });
    if (overlaps) continue;
    taken.insert(c.match.node_ids.begin(), c.match.node_ids.end());
    ProposedPattern p;
    p.priority_rank = static_cast<int>(out.size()) + 1;
    p.pattern_id = "p" + std::to_string(p.priority_rank) + (arch == Arch::SM80 ? "_ampere" : "_hopper");
    p.rule = c.match.rule;
    p.arch = arch;
    p.dtype = dtype_override.value_or(default_dtype(p.rule, arch));
    p.score = c.score;
    p.node_ids = c.match.node_ids;
    p.roles = c.match.roles;
    p.output = c.match.output;
    p.params = c.match.params;
    const auto examples = catalog.query(p.rule, p.dtype, arch);
    for (std::size_t i = 0; i < examples.size() && i < 3; ++i) p.supporting_examples.push_back(examples[i].example_id);
    const std::string support = examples.empty() ? std::string() : examples.front().reference();
    p.descriptor = make_descriptor(g, c.match, arch, p.dtype, p.pattern_id, support);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ProposedPattern> validate_proposals(const CompGraph& g, Arch arch, std::vector<ProposedPattern> ps) {
  std::set<std::string> seen_nodes;
  std::set<std::string> seen_ids;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ProposedPattern& p = ps[i];
    const std::string who = "proposal '" + p.pattern_id + "'";
    if (p.pattern_id.empty() || !seen_ids.insert(p.pattern_id).second) {
      throw ValidationError("proposal " + std::to_string(i) + ": missing or duplicate pattern_id");
    }
    if (p.arch != arch) throw ValidationError(who + ": arch differs from request");
    if (p.node_ids.empty()) throw ValidationError(who + ": empty node set");
    check_convex(g, p.node_ids);
    const auto m = analyze_pattern(g, p.rule, p.node_ids);
    if (!m) throw ValidationError(who + ": node set is not a " + std::string(to_string(p.rule)) + " instance");
    if (p.roles.empty()) p.roles = m->roles;
    if (p.output.empty()) p.output = m->output;
    if (p.roles != m->roles || p.output != m->output) throw ValidationError(who + ": role binding disagrees with graph");
    if (p.params.head_dim == 0 && is_attention_rule(p.rule)) p.params = m->params;
    if (is_attention_rule(p.rule) && !same_params(p.params, m->params)) {
      throw ValidationError(who + ": attention parameters disagree with graph");
    }
    if (p.score != flop_estimate(g, p.node_ids)) throw ValidationError(who + ": score is not the FLOP estimate");
    if (p.priority_rank != static_cast<int>(i) + 1) throw ValidationError(who + ": priority_rank out of sequence");
    if (i > 0 && ps[i - 1].score < p.score) throw ValidationError(who + ": ranked above a lower score");
    for (const auto& id : p.node_ids) {
      if (!seen_nodes.insert(id).second) throw ValidationError(who + ": node '" + id + "' claimed twice");
    }
    if (p.descriptor.optimization_rule != to_string(p.rule) || p.descriptor.data_type != to_string(p.dtype)) {
      throw ValidationError(who + ": descriptor disagrees with rule or dtype");
    }
  }
  return ps;
}

nlohmann::ordered_json proposals_document(const CompGraph& g, Arch arch, const std::vector<ProposedPattern>& ps) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["arch"] = std::string(to_string(arch));
  doc["graph"] = to_trace_json(g);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& p : ps) list.push_back(p.to_json());
  doc["proposals"] = list;
  return doc;
}

ProposalsDoc parse_proposals_document(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) throw ValidationError("proposals document must be an object");
  ProposalsDoc out;
  try {
    if (doc.value("schema_version", 0) != 1) throw ValidationError("proposals document: unsupported schema_version");
    out.arch = arch_or_throw(doc.at("arch").get<std::string>());
    out.graph = ingest_trace_json(nlohmann::json(doc.at("graph")));
    for (const auto& p : doc.at("proposals")) out.proposals.push_back(ProposedPattern::from_json(p));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("proposals document: ") + e.what());
  }
  out.proposals = validate_proposals(out.graph, out.arch, std::move(out.proposals));
  return out;
}

}  // namespace ksynth
