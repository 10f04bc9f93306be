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

#include "ksynth/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "ksynth/hash.hpp"

namespace ksynth {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw RegistryError("cannot read " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Write to a sibling temp file, fsync, then rename over the target.
void atomic_write(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp." + std::to_string(::getpid());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw RegistryError("cannot write " + tmp.string());
  std::size_t done = 0;
  while (done < text.size()) {
    const ssize_t n = ::write(fd, text.data() + done, text.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw RegistryError("write failed for " + tmp.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw RegistryError("cannot publish " + p.string() + ": " + ec.message());
}

// Exclusive advisory lock on <root>/.lock, released on scope exit.
class LockFile {
 public:
  explicit LockFile(const fs::path& root) {
    const fs::path p = root / ".lock";
    fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw RegistryError("cannot open lock file " + p.string());
    while (::flock(fd_, LOCK_EX) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        throw RegistryError("cannot lock " + p.string());
      }
    }
  }
  ~LockFile() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  int fd_ = -1;
};

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

constexpr const char* kEpoch = "1970-01-01T00:00:00Z";

nlohmann::ordered_json json_or_null(const auto& opt) {
  return opt ? opt->to_json() : nlohmann::ordered_json(nullptr);
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

nlohmann::ordered_json index_entry(const RegistryEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["seq"] = e.seq;
  j["rule"] = std::string(to_string(e.key.rule));
  j["dtype"] = std::string(to_string(e.key.dtype));
  j["arch"] = std::string(to_string(e.key.arch));
  j["status"] = std::string(to_string(e.status));
  j["config"] = e.config.slug();
  j["config_detail"] = e.config.to_json();
  j["input_shapes"] = e.shapes();
  j["kernel"] = {{"path", e.kernel.path}, {"sha256", e.kernel.sha256}};
  j["supporting_examples"] = e.supporting_examples;
  j["created_at"] = e.created_at;
  return j;
}

std::string index_text(const std::vector<RegistryEntry>& entries, std::int64_t next_seq) {
  nlohmann::ordered_json j;
  j["schema_version"] = kRegistrySchemaVersion;
  j["next_seq"] = next_seq;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) j["entries"].push_back(index_entry(e));
  return dump(j);
}

EntryStatus parse_status(const std::string& s) {
  if (s == "accepted") return EntryStatus::accepted;
  if (s == "superseded") return EntryStatus::superseded;
  throw RegistryError("unknown entry status '" + s + "'");
}

nlohmann::ordered_json read_ordered(const fs::path& p) {
  try {
    return nlohmann::ordered_json::parse(read_text(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw RegistryError("corrupt " + p.string() + ": " + e.what());
  }
}

struct Snapshot {
  std::vector<RegistryEntry> entries;
  std::int64_t next_seq = 1;
};

Snapshot load_snapshot(const fs::path& root) {
  Snapshot s;
  const fs::path index = root / "index.json";
  if (!fs::exists(index)) return s;
  const auto j = read_ordered(index);
  try {
    if (!j.is_object() || !j.contains("schema_version")) throw RegistryError("corrupt index " + index.string());
    const int v = j.at("schema_version").get<int>();
    if (v != kRegistrySchemaVersion) {
      throw RegistryError(fmt::format("registry schema_version {} is not supported (expected {})", v,
                                      kRegistrySchemaVersion));
    }
    s.next_seq = j.at("next_seq").get<std::int64_t>();
    for (const auto& ej : j.at("entries")) {
      RegistryEntry e;
      e.id = ej.at("id").get<std::string>();
      e.seq = ej.at("seq").get<std::int64_t>();
      e.key = {rule_or_throw(ej.at("rule").get<std::string>()), dtype_or_throw(ej.at("dtype").get<std::string>()),
               arch_or_throw(ej.at("arch").get<std::string>())};
      e.status = parse_status(ej.at("status").get<std::string>());
      e.config = ej.contains("config_detail") ? TuneConfig::from_json(ej.at("config_detail"))
                                              : parse_slug(ej.at("config").get<std::string>());
      e.kernel = {ej.at("kernel").at("sha256").get<std::string>(), ej.at("kernel").at("path").get<std::string>()};
      e.supporting_examples = ej.value("supporting_examples", std::vector<std::string>{});
      e.created_at = ej.value("created_at", std::string());

      const fs::path dir = root / "entries" / e.id;
      const fs::path kernel = root / e.kernel.path;
      if (!fs::exists(kernel)) throw RegistryError("entry " + e.id + ": missing kernel file " + kernel.string());
      if (sha256_file(kernel.string()) != e.kernel.sha256) {
        throw RegistryError("entry " + e.id + ": hash mismatch for " + kernel.string());
      }
      for (const char* f : {"descriptor.json", "tuning.json", "benchmark.json"}) {
        if (!fs::exists(dir / f)) throw RegistryError("entry " + e.id + ": missing " + (dir / f).string());
      }
      e.descriptor = PatternDescriptor::from_json(read_ordered(dir / "descriptor.json"));
      const auto tuning = read_ordered(dir / "tuning.json");
      if (!tuning.is_null()) e.tuning = TuningRecord::from_json(nlohmann::json(tuning));
      const auto bench = read_ordered(dir / "benchmark.json");
      if (!bench.is_null()) e.benchmark = BenchmarkRecord::from_json(nlohmann::json(bench));
      s.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw RegistryError("corrupt index " + index.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw RegistryError("corrupt registry at " + root.string() + ": " + e.what());
  }
  return s;
}

void write_entry_files(const fs::path& root, const RegistryEntry& e, const std::string& kernel_source,
                       const std::optional<std::string>& wrapper) {
  const fs::path dir = root / "entries" / e.id;
  fs::create_directories(dir);
  atomic_write(root / e.kernel.path, kernel_source);
  atomic_write(dir / "descriptor.json", dump(e.descriptor.to_json()));
  atomic_write(dir / "tuning.json", dump(json_or_null(e.tuning)));
  atomic_write(dir / "benchmark.json", dump(json_or_null(e.benchmark)));
  if (wrapper) atomic_write(dir / "wrapper.cpp", *wrapper);
}

}  // namespace

std::string PatternKey::str() const {
  return fmt::format("{}/{}/{}", to_string(rule), to_string(dtype), to_string(arch));
}

std::string_view to_string(EntryStatus s) { return s == EntryStatus::accepted ? "accepted" : "superseded"; }

nlohmann::ordered_json TuningRecord::to_json() const {
  nlohmann::ordered_json j;
  j["space"] = space;
  j["best"] = best.to_json();
  j["best_slug"] = best.slug();
  j["swept"] = swept;
  j["valid"] = valid;
  j["failed"] = failed;
  j["best_mean_ms"] = best_mean_ms;
  return j;
}

TuningRecord TuningRecord::from_json(const nlohmann::json& j) {
  TuningRecord t;
  t.space = j.at("space").get<std::string>();
  t.best = TuneConfig::from_json(j.at("best"));
  t.swept = j.at("swept").get<std::size_t>();
  t.valid = j.at("valid").get<std::size_t>();
  t.failed = j.at("failed").get<std::size_t>();
  t.best_mean_ms = j.value("best_mean_ms", 0.0);
  return t;
}

nlohmann::ordered_json BenchmarkRecord::to_json() const {
  nlohmann::ordered_json j;
  j["mean_ms"] = mean_ms;
  j["tflops"] = tflops;
  j["speedup_vs_baseline"] = speedup_vs_baseline;
  j["executor"] = executor;
  return j;
}

BenchmarkRecord BenchmarkRecord::from_json(const nlohmann::json& j) {
  BenchmarkRecord b;
  b.mean_ms = j.at("mean_ms").get<double>();
  b.tflops = j.at("tflops").get<double>();
  b.speedup_vs_baseline = j.at("speedup_vs_baseline").get<double>();
  b.executor = j.value("executor", std::string());
  return b;
}

std::vector<Shape> RegistryEntry::shapes() const {
  std::vector<Shape> out;
  for (const auto& [_, s] : descriptor.input_shapes) out.push_back(s);
  return out;
}

nlohmann::ordered_json RegistryEntry::to_json() const {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["key"] = {{"rule", std::string(to_string(key.rule))},
              {"dtype", std::string(to_string(key.dtype))},
              {"arch", std::string(to_string(key.arch))}};
  j["status"] = std::string(to_string(status));
  j["created_at"] = created_at;
  j["config"] = config.to_json();
  j["kernel"] = {{"path", kernel.path}, {"sha256", kernel.sha256}};
  j["tuning"] = json_or_null(tuning);
  j["benchmark"] = json_or_null(benchmark);
  j["supporting_examples"] = supporting_examples;
  j["descriptor"] = descriptor.to_json();
  return j;
}

std::string make_entry_id(std::int64_t seq, const PatternKey& key, const TuneConfig& config) {
  return fmt::format("{:04d}-{}-{}-{}-{}", seq, lower(to_string(key.rule)), to_string(key.dtype),
                     lower(to_string(key.arch)), config.slug());
}

Registry::Registry(fs::path root, RegistryOptions opts) : root_(std::move(root)), opts_(opts) { reload(); }

void Registry::reload() {
  Snapshot s = load_snapshot(root_);
  std::lock_guard<std::mutex> lock(mu_);
  entries_ = std::move(s.entries);
  next_seq_ = s.next_seq;
}

std::string Registry::insert(const EntryDraft& d) {
  if (d.tuning && d.tuning->swept != d.tuning->valid + d.tuning->failed) {
    throw RegistryError(fmt::format("tuning counts inconsistent: swept {} != valid {} + failed {}", d.tuning->swept,
                                    d.tuning->valid, d.tuning->failed));
  }
  if (d.config.arch != d.key.arch) throw RegistryError("entry config arch differs from its key");
  const auto desc_rule = parse_rule(d.descriptor.optimization_rule);
  const auto desc_arch = parse_arch(d.descriptor.target_architecture);
  const auto desc_dtype = parse_dtype(d.descriptor.data_type);
  if (desc_rule != d.key.rule || desc_arch != d.key.arch || desc_dtype != d.key.dtype) {
    throw RegistryError("descriptor fields do not match key " + d.key.str());
  }

  // Hash check before anything touches the store.
  if (!fs::exists(d.kernel_file)) throw RegistryError("kernel file not found: " + d.kernel_file.string());
  const std::string source = read_text(d.kernel_file);
  if (sha256_hex(source) != d.kernel_sha256) {
    throw RegistryError("hash mismatch for " + d.kernel_file.string() + ": expected " + d.kernel_sha256);
  }

  std::lock_guard<std::mutex> guard(mu_);
  fs::create_directories(root_);
  LockFile lock(root_);
  // Another writer may have published since we loaded.
  Snapshot s = load_snapshot(root_);

  RegistryEntry e;
  e.seq = s.next_seq;
  e.key = d.key;
  e.descriptor = d.descriptor;
  e.config = d.config;
  e.id = make_entry_id(e.seq, e.key, e.config);
  e.kernel = {d.kernel_sha256, "entries/" + e.id + "/kernel.cu"};
  e.tuning = d.tuning;
  e.benchmark = d.benchmark;
  e.supporting_examples = d.supporting_examples;
  e.created_at = opts_.deterministic ? kEpoch : now_utc();
  e.status = EntryStatus::accepted;

  write_entry_files(root_, e, source, d.wrapper_text);

  const auto shapes = e.shapes();
  for (auto& old : s.entries) {
    if (old.status == EntryStatus::accepted && old.key == e.key && old.shapes() == shapes) {
      old.status = EntryStatus::superseded;
    }
  }
  s.entries.push_back(e);
  s.next_seq = e.seq + 1;
  atomic_write(root_ / "index.json", index_text(s.entries, s.next_seq));

  entries_ = std::move(s.entries);
  next_seq_ = s.next_seq;
  return e.id;
}

std::vector<RegistryEntry> Registry::query(const PatternKey& key, const std::optional<std::vector<Shape>>& shapes) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<RegistryEntry> out;
  for (const auto& e : entries_) {
    if (e.status != EntryStatus::accepted || e.key != key) continue;
    if (shapes && e.shapes() != *shapes) continue;
    out.push_back(e);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.seq > b.seq; });
  return out;
}

std::vector<RegistryEntry> Registry::list(bool include_superseded) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<RegistryEntry> out;
  for (const auto& e : entries_) {
    if (include_superseded || e.status == EntryStatus::accepted) out.push_back(e);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.key != b.key) return a.key < b.key;
    return a.id < b.id;
  });
  return out;
}

std::optional<RegistryEntry> Registry::find(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (const auto& e : entries_) {
    if (e.id == id) return e;
  }
  return std::nullopt;
}

void Registry::persist(const fs::path& dest) const {
  std::lock_guard<std::mutex> lock(mu_);
  fs::create_directories(dest);
  for (const auto& e : entries_) {
    const fs::path dir = root_ / "entries" / e.id;
    std::optional<std::string> wrapper;
    if (fs::exists(dir / "wrapper.cpp")) wrapper = read_text(dir / "wrapper.cpp");
    RegistryEntry copy = e;
    write_entry_files(dest, copy, read_text(root_ / e.kernel.path), wrapper);
  }
  atomic_write(dest / "index.json", index_text(entries_, next_seq_));
}

}  // namespace ksynth
