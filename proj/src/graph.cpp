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

#include "ksynth/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace ksynth {

std::int64_t num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

constexpr std::pair<OpKind, std::string_view> kKindNames[] = {
    {OpKind::input, "input"},
    {OpKind::parameter, "parameter"},
    {OpKind::constant, "constant"},
    {OpKind::matmul, "matmul"},
    {OpKind::batched_matmul, "batched_matmul"},
    {OpKind::linear, "linear"},
    {OpKind::add, "add"},
    {OpKind::mul, "mul"},
    {OpKind::scale, "scale"},
    {OpKind::transpose, "transpose"},
    {OpKind::reshape, "reshape"},
    {OpKind::split, "split"},
    {OpKind::concat, "concat"},
    {OpKind::softmax, "softmax"},
    {OpKind::causal_mask, "causal_mask"},
    {OpKind::layernorm, "layernorm"},
    {OpKind::rmsnorm, "rmsnorm"},
    {OpKind::gelu, "gelu"},
    {OpKind::silu, "silu"},
    {OpKind::repeat_interleave, "repeat_interleave"},
    {OpKind::dropout_eval, "dropout_eval"},
    {OpKind::output, "output"},
    {OpKind::kernel_call, "kernel_call"},
};

// Attribute keys whose values are integer dimension expressions.
bool is_int_expr_key(const std::string& key) {
  static const std::set<std::string> keys = {"shape", "perm", "repeats", "rsqrt_of",
                                             "parts", "index", "axis"};
  return keys.count(key) != 0;
}

std::int64_t bind_int(const nlohmann::json& v, const DimBindings& dims) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_string()) return eval_dim_expr(v.get<std::string>(), dims);
  throw ValidationError("expected integer or dimension expression, got " + v.dump());
}

[[noreturn]] void shape_fail(const Node& n, const std::string& what) {
  throw ValidationError("shape mismatch at node '" + n.id + "' (" + std::string(to_string(n.kind)) +
                        "): " + what);
}

std::int64_t norm_axis(const Node& n, std::int64_t axis, std::size_t rank) {
  const auto r = static_cast<std::int64_t>(rank);
  const std::int64_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) shape_fail(n, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  return a;
}

Shape broadcast(const Node& n, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      shape_fail(n, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

void require_arity(const Node& n, std::size_t lo, std::size_t hi) {
  if (n.inputs.size() < lo || n.inputs.size() > hi) {
    throw ValidationError("node '" + n.id + "' (" + std::string(to_string(n.kind)) + ") expects " +
                          std::to_string(lo) + (lo == hi ? "" : ".." + std::to_string(hi)) +
                          " inputs, got " + std::to_string(n.inputs.size()));
  }
}

void require_attr(const Node& n, const char* key) {
  if (!n.has_attr(key)) {
    throw ValidationError("node '" + n.id + "' (" + std::string(to_string(n.kind)) +
                          ") is missing required attr '" + key + "'");
  }
}

Shape declared_shape(const Node& n, const DimBindings& dims) {
  if (!n.raw_shape.is_array()) {
    throw ValidationError("node '" + n.id + "' (" + std::string(to_string(n.kind)) + ") requires a shape");
  }
  Shape s;
  for (const auto& d : n.raw_shape) s.push_back(bind_int(d, dims));
  if (s.empty()) throw ValidationError("node '" + n.id + "' has rank 0");
  for (auto d : s) {
    if (d < 1) throw ValidationError("node '" + n.id + "' has non-positive dimension in " + shape_str(s));
  }
  return s;
}

Shape infer_node(const Node& n, const std::vector<const TensorMeta*>& in, const DimBindings& dims) {
  auto sh = [&](std::size_t i) -> const Shape& { return in[i]->shape; };
  switch (n.kind) {
    case OpKind::input:
    case OpKind::parameter:
    case OpKind::constant:
    case OpKind::kernel_call:
      return declared_shape(n, dims);
    case OpKind::matmul: {
      const Shape& a = sh(0);
      const Shape& b = sh(1);
      if (a.size() != 2 || b.size() != 2) {
        shape_fail(n, "expected rank-2 operands, got " + shape_str(a) + " x " + shape_str(b));
      }
      if (a[1] != b[0]) {
        shape_fail(n, "K: " + std::to_string(a[1]) + " != " + std::to_string(b[0]) + " (expected [M,K]x[K,N], got " +
                          shape_str(a) + " x " + shape_str(b) + ")");
      }
      return {a[0], b[1]};
    }
    case OpKind::batched_matmul: {
      const Shape& a = sh(0);
      const Shape& b = sh(1);
      if (a.size() < 3 || a.size() != b.size()) {
        shape_fail(n, "expected equal-rank (>=3) operands, got " + shape_str(a) + " x " + shape_str(b));
      }
      const std::size_t r = a.size();
      for (std::size_t i = 0; i + 2 < r; ++i) {
        if (a[i] != b[i]) {
          shape_fail(n, "batch dim " + std::to_string(i) + ": " + std::to_string(a[i]) + " != " + std::to_string(b[i]));
        }
      }
      if (a[r - 1] != b[r - 2]) {
        shape_fail(n, "K: " + std::to_string(a[r - 1]) + " != " + std::to_string(b[r - 2]) + " (got " +
                          shape_str(a) + " x " + shape_str(b) + ")");
      }
      Shape out(a.begin(), a.end() - 1);
      out.push_back(b[r - 1]);
      return out;
    }
    case OpKind::linear: {
      const Shape& x = sh(0);
      const Shape& w = sh(1);
      if (w.size() != 2) shape_fail(n, "weight must be rank 2 [in,out], got " + shape_str(w));
      if (x.back() != w[0]) {
        shape_fail(n, "K: " + std::to_string(x.back()) + " != " + std::to_string(w[0]) + " (input " + shape_str(x) +
                          ", weight " + shape_str(w) + ")");
      }
      if (in.size() == 3 && (sh(2).size() != 1 || sh(2)[0] != w[1])) {
        shape_fail(n, "bias must be [" + std::to_string(w[1]) + "], got " + shape_str(sh(2)));
      }
      Shape out = x;
      out.back() = w[1];
      return out;
    }
    case OpKind::add:
    case OpKind::mul:
      return broadcast(n, sh(0), sh(1));
    case OpKind::causal_mask:
      if (sh(0).size() < 2) shape_fail(n, "causal_mask needs rank >= 2");
      return sh(0);
    case OpKind::scale:
    case OpKind::gelu:
    case OpKind::silu:
    case OpKind::dropout_eval:
    case OpKind::output:
      return sh(0);
    case OpKind::softmax:
      norm_axis(n, n.attr_int_or("axis", -1), sh(0).size());
      return sh(0);
    case OpKind::layernorm:
    case OpKind::rmsnorm: {
      const Shape& x = sh(0);
      for (std::size_t i = 1; i < in.size(); ++i) {
        if (sh(i) != Shape{x.back()}) {
          shape_fail(n, "affine parameter must be [" + std::to_string(x.back()) + "], got " + shape_str(sh(i)));
        }
      }
      return x;
    }
    case OpKind::transpose: {
      const auto& perm = n.attr_ints("perm");
      const Shape& x = sh(0);
      if (perm.size() != x.size()) shape_fail(n, "perm rank differs from input rank");
      std::vector<bool> seen(x.size(), false);
      Shape out(x.size());
      for (std::size_t i = 0; i < perm.size(); ++i) {
        const auto p = norm_axis(n, perm[i], x.size());
        if (seen[p]) shape_fail(n, "perm is not a permutation");
        seen[p] = true;
        out[i] = x[p];
      }
      return out;
    }
    case OpKind::reshape: {
      Shape out = n.attr_ints("shape");
      const std::int64_t total = num_elements(sh(0));
      std::int64_t known = 1;
      int wildcard = -1;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == -1) {
          if (wildcard >= 0) shape_fail(n, "more than one -1 in reshape");
          wildcard = static_cast<int>(i);
        } else {
          known *= out[i];
        }
      }
      if (wildcard >= 0 && known > 0 && total % known == 0) out[wildcard] = total / known;
      if (num_elements(out) != total) {
        shape_fail(n, "cannot reshape " + shape_str(sh(0)) + " to " + shape_str(n.attr_ints("shape")));
      }
      return out;
    }
    case OpKind::split: {
      Shape out = sh(0);
      const auto axis = norm_axis(n, n.attr_int("axis"), out.size());
      const auto parts = n.attr_int("parts");
      const auto index = n.attr_int("index");
      if (parts < 1 || out[axis] % parts != 0) {
        shape_fail(n, "dim " + std::to_string(out[axis]) + " not divisible into " + std::to_string(parts) + " parts");
      }
      if (index < 0 || index >= parts) shape_fail(n, "split index out of range");
      out[axis] /= parts;
      return out;
    }
    case OpKind::concat: {
      Shape out = sh(0);
      const auto axis = norm_axis(n, n.attr_int("axis"), out.size());
      for (std::size_t i = 1; i < in.size(); ++i) {
        const Shape& s = sh(i);
        if (s.size() != out.size()) shape_fail(n, "concat rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
          if (static_cast<std::int64_t>(d) != axis && s[d] != out[d]) {
            shape_fail(n, "concat dim " + std::to_string(d) + ": " + std::to_string(s[d]) + " != " + std::to_string(out[d]));
          }
        }
        out[axis] += s[axis];
      }
      return out;
    }
    case OpKind::repeat_interleave: {
      Shape out = sh(0);
      const auto axis = norm_axis(n, n.attr_int("axis"), out.size());
      const auto r = n.attr_int("repeats");
      if (r < 1) shape_fail(n, "repeats must be >= 1");
      out[axis] *= r;
      return out;
    }
  }
  shape_fail(n, "unhandled kind");
}

void check_kind_contract(const Node& n) {
  switch (n.kind) {
    case OpKind::input:
    case OpKind::parameter:
    case OpKind::constant:
      require_arity(n, 0, 0);
      break;
    case OpKind::matmul:
    case OpKind::batched_matmul:
    case OpKind::add:
    case OpKind::mul:
      require_arity(n, 2, 2);
      break;
    case OpKind::linear:
      require_arity(n, 2, 3);
      break;
    case OpKind::layernorm:
      require_arity(n, 1, 3);
      break;
    case OpKind::rmsnorm:
      require_arity(n, 1, 2);
      break;
    case OpKind::concat:
      require_arity(n, 1, 64);
      require_attr(n, "axis");
      break;
    case OpKind::kernel_call:
      require_arity(n, 1, 64);
      require_attr(n, "rule");
      break;
    case OpKind::scale:
      require_arity(n, 1, 1);
      require_attr(n, "factor");
      break;
    case OpKind::transpose:
      require_arity(n, 1, 1);
      require_attr(n, "perm");
      break;
    case OpKind::reshape:
      require_arity(n, 1, 1);
      require_attr(n, "shape");
      break;
    case OpKind::split:
      require_arity(n, 1, 1);
      require_attr(n, "axis");
      require_attr(n, "parts");
      require_attr(n, "index");
      break;
    case OpKind::repeat_interleave:
      require_arity(n, 1, 1);
      require_attr(n, "repeats");
      require_attr(n, "axis");
      break;
    case OpKind::softmax:
    case OpKind::causal_mask:
    case OpKind::gelu:
    case OpKind::silu:
    case OpKind::dropout_eval:
    case OpKind::output:
      require_arity(n, 1, 1);
      break;
  }
}

}  // namespace

std::string_view to_string(OpKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "?";
}

std::optional<OpKind> parse_op_kind(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

bool is_leaf(OpKind k) { return k == OpKind::input || k == OpKind::parameter || k == OpKind::constant; }

bool is_layout(OpKind k) {
  return k == OpKind::transpose || k == OpKind::reshape || k == OpKind::split || k == OpKind::concat ||
         k == OpKind::repeat_interleave || k == OpKind::dropout_eval || k == OpKind::output;
}

std::int64_t Node::attr_int(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ValidationError("node '" + id + "' missing attr '" + key + "'");
  if (auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
  if (auto* d = std::get_if<double>(&it->second)) return static_cast<std::int64_t>(*d);
  throw ValidationError("node '" + id + "' attr '" + key + "' is not an integer");
}

std::int64_t Node::attr_int_or(const std::string& key, std::int64_t fallback) const {
  return has_attr(key) ? attr_int(key) : fallback;
}

double Node::attr_double(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ValidationError("node '" + id + "' missing attr '" + key + "'");
  if (auto* d = std::get_if<double>(&it->second)) return *d;
  if (auto* v = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*v);
  throw ValidationError("node '" + id + "' attr '" + key + "' is not numeric");
}

double Node::attr_double_or(const std::string& key, double fallback) const {
  return has_attr(key) ? attr_double(key) : fallback;
}

const std::string& Node::attr_str(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ValidationError("node '" + id + "' missing attr '" + key + "'");
  if (auto* s = std::get_if<std::string>(&it->second)) return *s;
  throw ValidationError("node '" + id + "' attr '" + key + "' is not a string");
}

const std::vector<std::int64_t>& Node::attr_ints(const std::string& key) const {
  static const std::vector<std::int64_t> empty;
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ValidationError("node '" + id + "' missing attr '" + key + "'");
  if (auto* v = std::get_if<std::vector<std::int64_t>>(&it->second)) return *v;
  if (auto* s = std::get_if<std::vector<std::string>>(&it->second); s && s->empty()) return empty;
  throw ValidationError("node '" + id + "' attr '" + key + "' is not an integer list");
}

const std::vector<std::string>& Node::attr_strs(const std::string& key) const {
  static const std::vector<std::string> empty;
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ValidationError("node '" + id + "' missing attr '" + key + "'");
  if (auto* v = std::get_if<std::vector<std::string>>(&it->second)) return *v;
  if (auto* s = std::get_if<std::vector<std::int64_t>>(&it->second); s && s->empty()) return empty;
  throw ValidationError("node '" + id + "' attr '" + key + "' is not a string list");
}

const Node* CompGraph::find(std::string_view id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const Node& CompGraph::at(std::string_view id) const {
  if (const Node* n = find(id)) return *n;
  throw ValidationError("unknown node id '" + std::string(id) + "'");
}

std::optional<std::size_t> CompGraph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return i;
  }
  return std::nullopt;
}

std::map<std::string, std::vector<std::string>> CompGraph::consumers() const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& n : nodes) out[n.id];
  for (const auto& n : nodes) {
    for (const auto& in : n.inputs) {
      auto& v = out[in];
      if (v.empty() || v.back() != n.id) v.push_back(n.id);
    }
  }
  return out;
}

std::size_t CompGraph::count(OpKind k) const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [k](const Node& n) { return n.kind == k; }));
}

Attrs bind_attrs(OpKind kind, const nlohmann::json& raw, const DimBindings& dims) {
  Attrs out;
  if (raw.is_null()) return out;
  if (!raw.is_object()) throw ValidationError("attrs must be an object");
  for (const auto& [key, v] : raw.items()) {
    if (is_int_expr_key(key)) {
      if (v.is_array()) {
        std::vector<std::int64_t> ints;
        for (const auto& e : v) ints.push_back(bind_int(e, dims));
        out[key] = ints;
      } else {
        out[key] = bind_int(v, dims);
      }
    } else if (v.is_number_integer()) {
      out[key] = v.get<std::int64_t>();
    } else if (v.is_number()) {
      out[key] = v.get<double>();
    } else if (v.is_string()) {
      out[key] = v.get<std::string>();
    } else if (v.is_boolean()) {
      out[key] = static_cast<std::int64_t>(v.get<bool>());
    } else if (v.is_array()) {
      if (!v.empty() && v.front().is_string()) {
        out[key] = v.get<std::vector<std::string>>();
      } else {
        std::vector<std::int64_t> ints;
        for (const auto& e : v) ints.push_back(bind_int(e, dims));
        out[key] = ints;
      }
    } else {
      throw ValidationError("unsupported attr value for '" + key + "'");
    }
  }
  if (kind == OpKind::scale && out.count("rsqrt_of") && !out.count("factor")) {
    const auto d = std::get<std::int64_t>(out.at("rsqrt_of"));
    if (d <= 0) throw ValidationError("rsqrt_of must be positive");
    out["factor"] = 1.0 / std::sqrt(static_cast<double>(d));
  }
  return out;
}

void topo_sort(CompGraph& g) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (!pos.emplace(g.nodes[i].id, i).second) {
      throw ValidationError("duplicate node id '" + g.nodes[i].id + "'");
    }
  }
  std::vector<std::size_t> pending(g.nodes.size(), 0);
  std::vector<std::vector<std::size_t>> users(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& in : g.nodes[i].inputs) {
      auto it = pos.find(in);
      if (it == pos.end()) {
        throw ValidationError("node '" + g.nodes[i].id + "' references undefined id '" + in + "'");
      }
      ++pending[i];
      users[it->second].push_back(i);
    }
  }
  // Min-heap on original position keeps the sort stable.
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (pending[i] == 0) ready.insert(i);
  }
  std::vector<Node> sorted;
  sorted.reserve(g.nodes.size());
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    sorted.push_back(g.nodes[i]);
    for (auto u : users[i]) {
      if (--pending[u] == 0) ready.insert(u);
    }
  }
  if (sorted.size() != g.nodes.size()) {
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (pending[i] != 0) throw ValidationError("cycle detected involving node '" + g.nodes[i].id + "'");
    }
  }
  g.nodes = std::move(sorted);
}

void validate_structure(const CompGraph& g) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    if (n.id.empty()) throw ValidationError("node with empty id");
    if (!pos.emplace(n.id, i).second) throw ValidationError("duplicate node id '" + n.id + "'");
    for (const auto& in : n.inputs) {
      auto it = pos.find(in);
      if (it == pos.end()) {
        throw ValidationError("node '" + n.id + "' references undefined or later id '" + in + "'");
      }
    }
    check_kind_contract(n);
  }
  for (const auto& id : g.graph_inputs) {
    if (!pos.count(id)) throw ValidationError("graph input '" + id + "' does not exist");
  }
  std::set<std::string> outputs(g.graph_outputs.begin(), g.graph_outputs.end());
  for (const auto& id : g.graph_outputs) {
    if (!pos.count(id)) throw ValidationError("graph output '" + id + "' does not exist");
  }
  const auto users = g.consumers();
  for (const auto& n : g.nodes) {
    if (n.kind == OpKind::output || outputs.count(n.id)) continue;
    if (users.at(n.id).empty()) {
      throw ValidationError("node '" + n.id + "' has no consumers and is not a graph output");
    }
  }
}

CompGraph infer_shapes(const CompGraph& g) {
  CompGraph out = g;
  std::unordered_map<std::string, const TensorMeta*> metas;
  for (auto& n : out.nodes) {
    std::vector<const TensorMeta*> in;
    for (const auto& id : n.inputs) {
      auto it = metas.find(id);
      if (it == metas.end()) throw ValidationError("node '" + n.id + "' input '" + id + "' not yet defined");
      in.push_back(it->second);
    }
    Shape s = infer_node(n, in, g.dims);
    if (!is_leaf(n.kind) && n.kind != OpKind::kernel_call && n.raw_shape.is_array()) {
      const Shape declared = declared_shape(n, g.dims);
      if (declared != s) {
        shape_fail(n, "declared " + shape_str(declared) + " but inferred " + shape_str(s));
      }
    }
    n.out_meta.shape = std::move(s);
    if (!is_leaf(n.kind) && n.kind != OpKind::kernel_call && !in.empty()) n.out_meta.dtype = in[0]->dtype;
    metas[n.id] = &n.out_meta;
  }
  return out;
}

CompGraph rebind_dims(const CompGraph& g, const DimBindings& overrides) {
  CompGraph out = g;
  for (const auto& [k, v] : overrides) out.dims[k] = v;
  for (auto& n : out.nodes) n.attrs = bind_attrs(n.kind, n.raw_attrs, out.dims);
  return infer_shapes(out);
}

void check_convex(const CompGraph& g, const std::set<std::string>& node_ids) {
  for (const auto& id : node_ids) {
    if (!g.find(id)) throw ValidationError("unknown node id '" + id + "' in selection");
  }
  if (node_ids.empty()) return;
  const auto users = g.consumers();
  // Forward closure from the selection through outside nodes.
  std::set<std::string> downstream;
  std::deque<std::string> work;
  for (const auto& id : node_ids) {
    for (const auto& u : users.at(id)) {
      if (!node_ids.count(u) && downstream.insert(u).second) work.push_back(u);
    }
  }
  while (!work.empty()) {
    const std::string cur = work.front();
    work.pop_front();
    for (const auto& u : users.at(cur)) {
      if (node_ids.count(u)) {
        throw ValidationError("non-convex selection: path leaves the set at '" + cur + "' and re-enters at '" + u + "'");
      }
      if (downstream.insert(u).second) work.push_back(u);
    }
  }
  // Weak connectivity among selected nodes.
  std::set<std::string> seen;
  work.push_back(*node_ids.begin());
  seen.insert(*node_ids.begin());
  while (!work.empty()) {
    const std::string cur = work.front();
    work.pop_front();
    std::vector<std::string> nbrs = g.at(cur).inputs;
    const auto& us = users.at(cur);
    nbrs.insert(nbrs.end(), us.begin(), us.end());
    for (const auto& nb : nbrs) {
      if (node_ids.count(nb) && seen.insert(nb).second) work.push_back(nb);
    }
  }
  if (seen.size() != node_ids.size()) throw ValidationError("selection is not connected");
}

std::vector<std::string> boundary_inputs(const CompGraph& g, const std::set<std::string>& node_ids) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& n : g.nodes) {
    if (!node_ids.count(n.id)) continue;
    for (const auto& in : n.inputs) {
      if (!node_ids.count(in) && seen.insert(in).second) out.push_back(in);
    }
  }
  return out;
}

std::vector<std::string> boundary_outputs(const CompGraph& g, const std::set<std::string>& node_ids) {
  const std::set<std::string> outs(g.graph_outputs.begin(), g.graph_outputs.end());
  const auto users = g.consumers();
  std::vector<std::string> out;
  for (const auto& n : g.nodes) {
    if (!node_ids.count(n.id)) continue;
    bool external = outs.count(n.id) != 0;
    for (const auto& u : users.at(n.id)) external = external || !node_ids.count(u);
    if (external) out.push_back(n.id);
  }
  return out;
}

CompGraph extract_subgraph(const CompGraph& g, const std::set<std::string>& node_ids) {
  check_convex(g, node_ids);
  CompGraph sub;
  sub.name = g.name + "/sub";
  sub.dims = g.dims;
  for (const auto& id : boundary_inputs(g, node_ids)) {
    const Node& src = g.at(id);
    Node in;
    in.id = id;
    in.kind = OpKind::input;
    in.out_meta = src.out_meta;
    in.raw_shape = src.raw_shape.is_array() ? src.raw_shape : nlohmann::json(src.out_meta.shape);
    sub.nodes.push_back(std::move(in));
    sub.graph_inputs.push_back(id);
  }
  for (const auto& n : g.nodes) {
    if (!node_ids.count(n.id)) continue;
    sub.nodes.push_back(n);
    if (n.kind == OpKind::input && std::find(g.graph_inputs.begin(), g.graph_inputs.end(), n.id) != g.graph_inputs.end()) {
      sub.graph_inputs.push_back(n.id);
    }
  }
  sub.graph_outputs = boundary_outputs(g, node_ids);
  if (node_ids.size() == g.nodes.size()) {
    sub.name = g.name;
    sub.graph_inputs = g.graph_inputs;
    sub.graph_outputs = g.graph_outputs;
    sub.desk_dims = g.desk_dims;
  }
  validate_structure(sub);
  return sub;
}

}  // namespace ksynth
