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

#include "ksynth/examples_index.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ksynth {

bool ExampleRecord::serves(RuleTag r) const {
  return (rule && *rule == r) || std::find(also_matches.begin(), also_matches.end(), r) != also_matches.end();
}

std::string ExampleRecord::reference() const { return path.empty() ? example_id : path; }

ExampleCatalog::ExampleCatalog(std::vector<ExampleRecord> records) : records_(std::move(records)) {
  std::set<std::string> ids;
  for (const auto& r : records_) {
    if (r.example_id.empty()) throw ValidationError("catalog record with empty example_id");
    if (!ids.insert(r.example_id).second) throw ValidationError("duplicate example_id '" + r.example_id + "'");
    if (r.level < 1 || r.level > 3) {
      throw ValidationError("example '" + r.example_id + "': level must be 1, 2 or 3");
    }
  }
}

const ExampleRecord* ExampleCatalog::find(const std::string& example_id) const {
  for (const auto& r : records_) {
    if (r.example_id == example_id) return &r;
  }
  return nullptr;
}

int example_score(const ExampleRecord& r, RuleTag rule, DType dtype, Arch arch) {
  const bool dtype_hit = std::find(r.dtype_hints.begin(), r.dtype_hints.end(), dtype) != r.dtype_hints.end();
  return 4 * r.serves(rule) + 2 * (r.arch == arch) + (dtype_hit ? 1 : 0);
}

std::vector<ExampleRecord> ExampleCatalog::query(RuleTag rule, DType dtype, Arch arch,
                                                 const std::vector<TensorMeta>& /*shape_hint*/) const {
  std::vector<std::pair<int, const ExampleRecord*>> scored;
  for (const auto& r : records_) {
    const int s = example_score(r, rule, dtype, arch);
    if (s > 0) scored.emplace_back(s, &r);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->example_id < b.second->example_id;
  });
  std::vector<ExampleRecord> out;
  out.reserve(scored.size());
  for (const auto& [_, r] : scored) out.push_back(*r);
  return out;
}

std::vector<RuleTag> ExampleCatalog::uncovered_rules() const {
  std::vector<RuleTag> out;
  for (RuleTag t : kAllRules) {
    if (std::none_of(records_.begin(), records_.end(), [t](const ExampleRecord& r) { return r.serves(t); })) {
      out.push_back(t);
    }
  }
  return out;
}

ExampleCatalog parse_catalog(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = text.find_first_not_of(" \t\r\n") == std::string::npos ? nlohmann::json::array()
                                                                  : nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("catalog parse error: ") + e.what());
  }
  if (!doc.is_array()) throw ValidationError("catalog must be a JSON list of example records");
  std::vector<ExampleRecord> records;
  for (const auto& j : doc) {
    try {
      ExampleRecord r;
      r.example_id = j.at("example_id").get<std::string>();
      r.name = j.at("name").get<std::string>();
      r.arch = arch_or_throw(j.at("arch").get<std::string>());
      r.level = j.at("level").get<int>();
      if (auto it = j.find("rule"); it != j.end() && !it->is_null()) r.rule = rule_or_throw(it->get<std::string>());
      for (const auto& t : j.value("also_matches", nlohmann::json::array())) {
        r.also_matches.push_back(rule_or_throw(t.get<std::string>()));
      }
      for (const auto& t : j.value("dtype_hints", nlohmann::json::array())) {
        r.dtype_hints.push_back(dtype_or_throw(t.get<std::string>()));
      }
      r.notes = j.value("notes", std::string());
      r.path = j.value("path", std::string());
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("catalog record: ") + e.what());
    }
  }
  return ExampleCatalog(std::move(records));
}

ExampleCatalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open catalog '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_catalog(ss.str());
}

std::string data_dir() {
  if (const char* env = std::getenv("KSYNTH_DATA_DIR"); env && *env) return env;
  return KSYNTH_DATA_DIR;
}

ExampleCatalog default_catalog() { return load_catalog(data_dir() + "/catalog.json"); }

}  // namespace ksynth
