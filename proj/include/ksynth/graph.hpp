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

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ksynth/dtype.hpp"
#include "ksynth/expr.hpp"

namespace ksynth {

using Shape = std::vector<std::int64_t>;

std::int64_t num_elements(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorMeta {
  Shape shape;
  DType dtype = DType::fp32;

  std::int64_t numel() const { return num_elements(shape); }
  std::size_t rank() const { return shape.size(); }
  bool operator==(const TensorMeta&) const = default;
};

enum class OpKind {
  input,
  parameter,
  constant,
  matmul,
  batched_matmul,
  linear,
  add,
  mul,
  scale,
  transpose,
  reshape,
  split,
  concat,
  softmax,
  causal_mask,
  layernorm,
  rmsnorm,
  gelu,
  silu,
  repeat_interleave,
  dropout_eval,
  output,
  // Produced by the composer; never emitted by a tracer.
  kernel_call,
};

std::string_view to_string(OpKind k);
std::optional<OpKind> parse_op_kind(std::string_view s);

/// Leaf kinds carry no computation and contribute no FLOPs.
bool is_leaf(OpKind k);
/// Pure data-movement kinds: their output is a relabeling of input elements.
bool is_layout(OpKind k);

using AttrValue =
    std::variant<std::int64_t, double, std::string, std::vector<std::int64_t>, std::vector<std::string>>;
using Attrs = std::map<std::string, AttrValue>;

struct Node {
  std::string id;
  OpKind kind = OpKind::input;
  std::vector<std::string> inputs;
  Attrs attrs;
  TensorMeta out_meta;

  // Unbound document forms; shape/attr entries may be dimension expressions.
  nlohmann::json raw_attrs = nlohmann::json::object();
  nlohmann::json raw_shape;  // null when the document omits the shape

  bool has_attr(const std::string& key) const { return attrs.count(key) != 0; }
  std::int64_t attr_int(const std::string& key) const;
  std::int64_t attr_int_or(const std::string& key, std::int64_t fallback) const;
  double attr_double(const std::string& key) const;
  double attr_double_or(const std::string& key, double fallback) const;
  const std::string& attr_str(const std::string& key) const;
  const std::vector<std::int64_t>& attr_ints(const std::string& key) const;
  const std::vector<std::string>& attr_strs(const std::string& key) const;
};

/// A directed acyclic tensor-operation graph. Nodes are kept in a valid
/// topological order; values are treated as immutable once validated.
struct CompGraph {
  std::string name;
  std::vector<Node> nodes;
  std::vector<std::string> graph_inputs;
  std::vector<std::string> graph_outputs;
  DimBindings dims;
  std::vector<DimBindings> desk_dims;

  const Node* find(std::string_view id) const;
  const Node& at(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  /// Consumers of each node id, in node order.
  std::map<std::string, std::vector<std::string>> consumers() const;

  std::size_t count(OpKind k) const;
};

/// Evaluates the raw attribute document of a node against dimension bindings.
Attrs bind_attrs(OpKind kind, const nlohmann::json& raw, const DimBindings& dims);

/// Stable topological sort (Kahn, ties by current position). Throws
/// ValidationError naming a node on any cycle or dangling reference.
void topo_sort(CompGraph& g);

/// Structural checks: unique ids, known references, DAG, outputs exist,
/// every non-output node consumed, per-kind required attrs.
void validate_structure(const CompGraph& g);

/// Populates out_meta for every node from operator shape rules and checks
/// declared shapes. Throws ValidationError on mismatch.
CompGraph infer_shapes(const CompGraph& g);

/// Evaluates raw shapes/attrs under new dimension bindings and re-infers shapes.
CompGraph rebind_dims(const CompGraph& g, const DimBindings& overrides);

/// Checks that node_ids is convex in g: no path leaves the set and re-enters.
/// Throws ValidationError for unknown ids or non-convex/disconnected selections.
void check_convex(const CompGraph& g, const std::set<std::string>& node_ids);

/// Values flowing into the selection from outside, in first-use order.
std::vector<std::string> boundary_inputs(const CompGraph& g, const std::set<std::string>& node_ids);
/// Selection members consumed outside the selection or listed as graph outputs.
std::vector<std::string> boundary_outputs(const CompGraph& g, const std::set<std::string>& node_ids);

/// Cuts the selection out as a standalone graph whose inputs are the
/// boundary tensors (same ids as in the parent).
CompGraph extract_subgraph(const CompGraph& g, const std::set<std::string>& node_ids);

}  // namespace ksynth
