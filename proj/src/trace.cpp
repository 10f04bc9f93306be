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

#include "ksynth/trace.hpp"

#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace ksynth {
namespace {

const nlohmann::json& field(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing field '" + key + "'");
  return *it;
}

std::vector<std::string> string_list(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + " must be a list of ids");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ValidationError(where + " must contain strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

DimBindings parse_dims(const nlohmann::json& v, const std::string& where) {
  DimBindings dims;
  if (!v.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [k, val] : v.items()) {
    if (!val.is_number_integer() || val.get<std::int64_t>() < 1) {
      throw ValidationError(where + "." + k + " must be a positive integer");
    }
    dims[k] = val.get<std::int64_t>();
  }
  return dims;
}

}  // namespace

CompGraph ingest_trace_json(const nlohmann::json& doc, const DimBindings& dim_overrides) {
  if (!doc.is_object()) throw ValidationError("trace document must be a JSON object");
  static const std::set<std::string> known = {"name", "nodes", "graph_inputs", "graph_outputs", "dims",
                                              "desk_dims"};
  for (const auto& [k, _] : doc.items()) {
    if (!known.count(k)) spdlog::warn("trace: ignoring unknown top-level field '{}'", k);
  }

  CompGraph g;
  g.name = doc.value("name", std::string("graph"));
  if (auto it = doc.find("dims"); it != doc.end()) g.dims = parse_dims(*it, "dims");
  for (const auto& [k, v] : dim_overrides) g.dims[k] = v;
  if (auto it = doc.find("desk_dims"); it != doc.end()) {
    if (!it->is_array()) throw ValidationError("desk_dims must be a list");
    for (const auto& d : *it) g.desk_dims.push_back(parse_dims(d, "desk_dims[]"));
  }

  const auto& nodes = field(doc, "nodes", "trace");
  if (!nodes.is_array()) throw ValidationError("trace: 'nodes' must be a list");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& jn = nodes[i];
    const std::string where = "nodes[" + std::to_string(i) + "]";
    if (!jn.is_object()) throw ValidationError(where + " must be an object");
    Node n;
    const auto& id = field(jn, "id", where);
    if (!id.is_string()) throw ValidationError(where + ".id must be a string");
    n.id = id.get<std::string>();
    const auto& kind = field(jn, "kind", where);
    if (!kind.is_string()) throw ValidationError(where + ".kind must be a string");
    auto k = parse_op_kind(kind.get<std::string>());
    if (!k) throw ValidationError("node '" + n.id + "': unknown kind '" + kind.get<std::string>() + "'");
    n.kind = *k;
    if (auto it = jn.find("inputs"); it != jn.end()) n.inputs = string_list(*it, "node '" + n.id + "'.inputs");
    if (auto it = jn.find("attrs"); it != jn.end() && !it->is_null()) n.raw_attrs = *it;
    if (auto it = jn.find("shape"); it != jn.end() && !it->is_null()) {
      if (!it->is_array()) throw ValidationError("node '" + n.id + "'.shape must be a list");
      n.raw_shape = *it;
    }
    if (auto it = jn.find("dtype"); it != jn.end()) {
      if (!it->is_string()) throw ValidationError("node '" + n.id + "'.dtype must be a string");
      n.out_meta.dtype = dtype_or_throw(it->get<std::string>());
    }
    n.attrs = bind_attrs(n.kind, n.raw_attrs, g.dims);
    g.nodes.push_back(std::move(n));
  }
  g.graph_inputs = string_list(doc.value("graph_inputs", nlohmann::json::array()), "graph_inputs");
  g.graph_outputs = string_list(field(doc, "graph_outputs", "trace"), "graph_outputs");

  topo_sort(g);
  validate_structure(g);
  return infer_shapes(g);
}

CompGraph ingest_trace(std::string_view text, const DimBindings& dim_overrides) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("trace parse error: ") + e.what());
  }
  return ingest_trace_json(doc, dim_overrides);
}

CompGraph load_trace_file(const std::string& path, const DimBindings& dim_overrides) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ingest_trace(ss.str(), dim_overrides);
}

nlohmann::ordered_json to_trace_json(const CompGraph& g) {
  nlohmann::ordered_json doc;
  doc["name"] = g.name;
  if (!g.dims.empty()) {
    nlohmann::ordered_json dims = nlohmann::ordered_json::object();
    for (const auto& [k, v] : g.dims) dims[k] = v;
    doc["dims"] = dims;
  }
  if (!g.desk_dims.empty()) {
    nlohmann::ordered_json desk = nlohmann::ordered_json::array();
    for (const auto& d : g.desk_dims) {
      nlohmann::ordered_json o = nlohmann::ordered_json::object();
      for (const auto& [k, v] : d) o[k] = v;
      desk.push_back(o);
    }
    doc["desk_dims"] = desk;
  }
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const auto& n : g.nodes) {
    nlohmann::ordered_json jn;
    jn["id"] = n.id;
    jn["kind"] = std::string(to_string(n.kind));
    jn["inputs"] = n.inputs;
    jn["attrs"] = nlohmann::ordered_json::parse(n.raw_attrs.dump());
    if (n.raw_shape.is_array()) jn["shape"] = nlohmann::ordered_json::parse(n.raw_shape.dump());
    jn["dtype"] = std::string(to_string(n.out_meta.dtype));
    nodes.push_back(std::move(jn));
  }
  doc["nodes"] = std::move(nodes);
  doc["graph_inputs"] = g.graph_inputs;
  doc["graph_outputs"] = g.graph_outputs;
  return doc;
}

}  // namespace ksynth
