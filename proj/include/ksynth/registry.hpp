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

#include <compare>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksynth/discovery.hpp"
#include "ksynth/tuner.hpp"

namespace ksynth {

/// Storage failures, hash mismatches and unreadable stores.
class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The (rule, dtype, arch) index. Ordered rule first, then dtype, then arch.
struct PatternKey {
  RuleTag rule = RuleTag::GEMM;
  DType dtype = DType::fp32;
  Arch arch = Arch::SM80;

  auto operator<=>(const PatternKey&) const = default;
  std::string str() const;  // "GEMM/tf32/SM80"
};

struct TuningRecord {
  std::string space;
  TuneConfig best;
  std::size_t swept = 0, valid = 0, failed = 0;
  double best_mean_ms = 0;

  nlohmann::ordered_json to_json() const;
  static TuningRecord from_json(const nlohmann::json& j);
  bool operator==(const TuningRecord&) const = default;
};

struct BenchmarkRecord {
  double mean_ms = 0;
  double tflops = 0;
  double speedup_vs_baseline = 0;
  std::string executor;

  nlohmann::ordered_json to_json() const;
  static BenchmarkRecord from_json(const nlohmann::json& j);
  bool operator==(const BenchmarkRecord&) const = default;
};

enum class EntryStatus { accepted, superseded };
std::string_view to_string(EntryStatus s);

struct KernelRef {
  std::string sha256;
  std::string path;  // relative to the registry root
  bool operator==(const KernelRef&) const = default;
};

struct RegistryEntry {
  std::string id;
  std::int64_t seq = 0;
  PatternKey key;
  PatternDescriptor descriptor;
  TuneConfig config;
  KernelRef kernel;
  std::optional<TuningRecord> tuning;
  std::optional<BenchmarkRecord> benchmark;
  std::vector<std::string> supporting_examples;
  std::string created_at;
  EntryStatus status = EntryStatus::accepted;

  /// Input shapes of the descriptor, in role order.
  std::vector<Shape> shapes() const;
  nlohmann::ordered_json to_json() const;
  bool operator==(const RegistryEntry&) const = default;
};

/// What a caller hands to insert. The kernel source is read from
/// `kernel_file` and must hash to `kernel_sha256`.
struct EntryDraft {
  PatternKey key;
  PatternDescriptor descriptor;
  TuneConfig config;
  std::filesystem::path kernel_file;
  std::string kernel_sha256;
  std::optional<std::string> wrapper_text;
  std::optional<TuningRecord> tuning;
  std::optional<BenchmarkRecord> benchmark;
  std::vector<std::string> supporting_examples;
};

struct RegistryOptions {
  /// Fixed created_at so repeated runs produce byte-identical indexes.
  bool deterministic = false;
};

inline constexpr int kRegistrySchemaVersion = 1;

/// On-disk layout: <root>/index.json and <root>/entries/<id>/{kernel.cu,
/// descriptor.json, tuning.json, benchmark.json}. Inserts are serialized by
/// an exclusive lock on <root>/.lock and publish the index by atomic
/// rename, so readers never see a partial entry.
class Registry {
 public:
  /// Loads the store at `root`. A missing or empty directory is an empty
  /// store. Throws RegistryError on version mismatch, a corrupt index, or a
  /// kernel file that is missing or fails its hash.
  explicit Registry(std::filesystem::path root, RegistryOptions opts = {});

  const std::filesystem::path& root() const { return root_; }

  /// Adds an accepted entry and supersedes accepted entries with the same
  /// key and input shapes. Returns the new id. On any error the store is
  /// left unchanged.
  std::string insert(const EntryDraft& draft);

  /// Accepted entries with exactly this key, newest first. `shapes` keeps
  /// entries whose input shapes (role order) equal it.
  std::vector<RegistryEntry> query(const PatternKey& key,
                                   const std::optional<std::vector<Shape>>& shapes = std::nullopt) const;

  /// Entries sorted by key, then id. Superseded entries only on request.
  std::vector<RegistryEntry> list(bool include_superseded = false) const;

  std::optional<RegistryEntry> find(const std::string& id) const;
  std::size_t size() const { return entries_.size(); }

  /// Writes a complete copy of the store (index and every entry) to `dest`.
  void persist(const std::filesystem::path& dest) const;

  /// Re-reads the store from disk.
  void reload();

 private:
  std::filesystem::path root_;
  RegistryOptions opts_;
  std::vector<RegistryEntry> entries_;
  std::int64_t next_seq_ = 1;
  mutable std::mutex mu_;
};

/// Entry id: "<seq:04>-<rule>-<dtype>-<arch>-<slug>", lower case.
std::string make_entry_id(std::int64_t seq, const PatternKey& key, const TuneConfig& config);

}  // namespace ksynth
