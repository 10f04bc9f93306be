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

#include <optional>
#include <string>
#include <vector>

#include "ksynth/dtype.hpp"
#include "ksynth/graph.hpp"
#include "ksynth/rules.hpp"

namespace ksynth {

/// Metadata for one CUTLASS example. Records without a rule are catalogued
/// for completeness but never ranked by rule.
struct ExampleRecord {
  std::string example_id;
  std::string name;
  Arch arch = Arch::SM80;
  int level = 1;
  std::optional<RuleTag> rule;
  std::vector<RuleTag> also_matches;
  std::vector<DType> dtype_hints;
  std::string notes;
  std::string path;  // upstream example directory, if known

  bool serves(RuleTag r) const;
  /// `path` when known, otherwise the id.
  std::string reference() const;
};

class ExampleCatalog {
 public:
  ExampleCatalog() = default;
  explicit ExampleCatalog(std::vector<ExampleRecord> records);

  const std::vector<ExampleRecord>& records() const { return records_; }
  const ExampleRecord* find(const std::string& example_id) const;
  bool empty() const { return records_.empty(); }

  /// Score = 4*(rule match) + 2*(arch match) + 1*(dtype hint match).
  /// Records scoring zero are omitted; ties go to the smaller id.
  /// `shape_hint` is accepted for interface parity but does not affect
  /// the ranking.
  std::vector<ExampleRecord> query(RuleTag rule, DType dtype, Arch arch,
                                   const std::vector<TensorMeta>& shape_hint = {}) const;

  /// Rule tags with no serving record.
  std::vector<RuleTag> uncovered_rules() const;

 private:
  std::vector<ExampleRecord> records_;
};

int example_score(const ExampleRecord& r, RuleTag rule, DType dtype, Arch arch);

ExampleCatalog parse_catalog(const std::string& text);
ExampleCatalog load_catalog(const std::string& path);
/// The catalog shipped under the data directory.
ExampleCatalog default_catalog();

/// Root of shipped data: $KSYNTH_DATA_DIR when set, else the build-time path.
std::string data_dir();

}  // namespace ksynth
