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

#include <doctest.h>

#include <filesystem>

#include "ksynth/codegen.hpp"
#include "ksynth/hash.hpp"
#include "ksynth/registry.hpp"
#include "registry_property.hpp"
#include "test_support.hpp"

using namespace ksynth;
using namespace ksynth::testing;
namespace fs = std::filesystem;

namespace {

const PatternKey kP1{RuleTag::GEMM, DType::tf32, Arch::SM80};

// The tuned square GEMM, emitted and staged like realize does.
EntryDraft p1_draft(const fs::path& staging) {
  const auto ps = propose_patterns(load_fixture("p1_square_gemm"), Arch::SM80);
  REQUIRE(ps.size() == 1);
  const auto& p = ps[0];
  const TuneConfig cfg = parse_slug("tb128x256x32-s3");
  const auto spec = emit_kernel(p, cfg, arch_profile(Arch::SM80));
  EntryDraft d;
  d.key = {p.rule, p.dtype, p.arch};
  d.descriptor = p.descriptor;
  d.config = cfg;
  fs::create_directories(staging);
  d.kernel_file = staging / "kernel.cu";
  write_all(d.kernel_file, spec.source_text);
  d.kernel_sha256 = spec.content_hash;
  d.wrapper_text = spec.wrapper_text;
  d.tuning = TuningRecord{"sm80-square-gemm", cfg, 98, 98, 0, 8.84};
  d.benchmark = BenchmarkRecord{8.84, 124.4, 1.0, "replay"};
  d.supporting_examples = p.supporting_examples;
  return d;
}

struct TempDir {
  fs::path path = make_temp_dir("ksynth-reg-");
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

TEST_CASE("insert then query returns the entry") {
  TempDir t;
  Registry reg(t.path / "registry", {.deterministic = true});
  const auto d = p1_draft(t.path / "stage");
  const auto id = reg.insert(d);
  CHECK(id == "0001-gemm-tf32-sm80-tb128x256x32-s3");
  const auto got = reg.query(kP1);
  REQUIRE(got.size() == 1);
  CHECK(got[0].id == id);
  CHECK(got[0].status == EntryStatus::accepted);
  CHECK(got[0].kernel.sha256 == d.kernel_sha256);
  CHECK(got[0].created_at == "1970-01-01T00:00:00Z");
  CHECK(got[0].supporting_examples == d.supporting_examples);
  for (const char* f : {"kernel.cu", "descriptor.json", "tuning.json", "benchmark.json", "wrapper.cpp"}) {
    CHECK(fs::exists(t.path / "registry/entries" / id / f));
  }
  const auto index = nlohmann::json::parse(read_all(t.path / "registry/index.json"));
  CHECK(index["schema_version"] == 1);
  CHECK(fs::exists(t.path / "registry/.lock"));
}

TEST_CASE("second insert with the same key and shapes supersedes the first") {
  TempDir t;
  Registry reg(t.path / "registry");
  const auto d = p1_draft(t.path / "stage");
  const auto first = reg.insert(d);
  const auto second = reg.insert(d);
  CHECK(first != second);
  const auto got = reg.query(kP1);
  REQUIRE(got.size() == 1);
  CHECK(got[0].id == second);
  const auto old = reg.find(first);
  REQUIRE(old);
  CHECK(old->status == EntryStatus::superseded);
  // Superseded kernels stay on disk.
  CHECK(fs::exists(t.path / "registry" / old->kernel.path));
  CHECK(reg.list().size() == 1);
  CHECK(reg.list(true).size() == 2);
}

TEST_CASE("hash mismatch is rejected and the store is unchanged") {
  TempDir t;
  const fs::path root = t.path / "registry";
  Registry reg(root);
  reg.insert(p1_draft(t.path / "stage"));
  const std::string before = read_all(root / "index.json");
  const auto entries_before = std::distance(fs::directory_iterator(root / "entries"), fs::directory_iterator());

  auto d = p1_draft(t.path / "stage2");
  std::string text = read_all(d.kernel_file);
  text[text.size() / 2] ^= 0x01;
  write_all(d.kernel_file, text);
  CHECK_THROWS_WITH_AS(reg.insert(d), doctest::Contains("hash mismatch"), RegistryError);

  CHECK(read_all(root / "index.json") == before);
  CHECK(std::distance(fs::directory_iterator(root / "entries"), fs::directory_iterator()) == entries_before);
  CHECK(reg.size() == 1);
}

TEST_CASE("inconsistent drafts are rejected") {
  TempDir t;
  Registry reg(t.path / "registry");
  auto d = p1_draft(t.path / "stage");
  d.tuning->failed = 1;
  CHECK_THROWS_AS(reg.insert(d), RegistryError);
  d = p1_draft(t.path / "stage");
  d.key.dtype = DType::fp16;
  CHECK_THROWS_AS(reg.insert(d), RegistryError);
  CHECK(reg.size() == 0);
  CHECK_FALSE(fs::exists(t.path / "registry/index.json"));
}

TEST_CASE("query on an empty store") {
  TempDir t;
  const Registry reg(t.path / "nothing-here");
  CHECK(reg.query(kP1).empty());
  CHECK(reg.list().empty());
  fs::create_directories(t.path / "empty");
  CHECK(Registry(t.path / "empty").size() == 0);
}

TEST_CASE("shape filter selects by input shapes") {
  TempDir t;
  Registry reg(t.path / "registry");
  const auto big = reg.insert(p1_draft(t.path / "stage"));
  const auto small = reg.insert(synthetic_draft(kP1, {{512, 512}, {512, 512}}, parse_slug("tb64x64x32-s5"),
                                                "// small\n", t.path / "stage"));
  const std::vector<Shape> p1_shapes = {{4096, 4096}, {4096, 4096}};
  const auto a = reg.query(kP1, p1_shapes);
  REQUIRE(a.size() == 1);
  CHECK(a[0].id == big);
  const auto b = reg.query(kP1, std::vector<Shape>{{512, 512}, {512, 512}});
  REQUIRE(b.size() == 1);
  CHECK(b[0].id == small);
  // Different shapes do not supersede each other; newest first without a filter.
  const auto both = reg.query(kP1);
  REQUIRE(both.size() == 2);
  CHECK(both[0].id == small);
  CHECK(both[1].id == big);
  CHECK(reg.query(kP1, std::vector<Shape>{{1, 1}}).empty());
  CHECK(reg.query({RuleTag::GEMM, DType::fp16, Arch::SM80}).empty());
}

TEST_CASE("persist and load round-trip") {
  TempDir t;
  Registry reg(t.path / "registry");
  reg.insert(p1_draft(t.path / "stage"));
  reg.insert(synthetic_draft({RuleTag::GEMM, DType::fp16, Arch::SM90}, {{8192, 8192}, {8192, 8192}},
                             parse_slug("tb128x256x64-c2x1x1-coop"), "// h100\n", t.path / "stage"));
  reg.insert(synthetic_draft({RuleTag::GEMM_StreamK, DType::fp16, Arch::SM90}, {{256, 524288}, {524288, 256}},
                             parse_slug("tb128x128x64-c1x1x1-pp"), "// streamk\n", t.path / "stage"));
  reg.persist(t.path / "copy");
  const Registry copy(t.path / "copy");
  CHECK(copy.list(true) == reg.list(true));
  CHECK(Registry(t.path / "registry").list(true) == reg.list(true));
  // list is ordered by key.
  const auto l = copy.list();
  REQUIRE(l.size() == 3);
  CHECK(l[0].key < l[1].key);
  CHECK(l[1].key < l[2].key);
}

TEST_CASE("load errors name the offending file") {
  TempDir t;
  const fs::path root = t.path / "registry";
  std::string kernel_path;
  {
    Registry reg(root);
    const auto id = reg.insert(p1_draft(t.path / "stage"));
    kernel_path = (root / reg.find(id)->kernel.path).string();
  }
  SUBCASE("missing kernel") {
    fs::remove(kernel_path);
    CHECK_THROWS_WITH_AS(Registry{root}, doctest::Contains(kernel_path.c_str()), RegistryError);
  }
  SUBCASE("tampered kernel") {
    write_all(kernel_path, "tampered");
    CHECK_THROWS_WITH_AS(Registry{root}, doctest::Contains("hash mismatch"), RegistryError);
  }
  SUBCASE("corrupt index") {
    write_all(root / "index.json", "{not json");
    CHECK_THROWS_WITH_AS(Registry{root}, doctest::Contains("index.json"), RegistryError);
  }
  SUBCASE("schema version") {
    auto j = nlohmann::json::parse(read_all(root / "index.json"));
    j["schema_version"] = 2;
    write_all(root / "index.json", j.dump());
    CHECK_THROWS_WITH_AS(Registry{root}, doctest::Contains("schema_version"), RegistryError);
  }
}

TEST_CASE("writers sharing a root see each other's entries") {
  TempDir t;
  Registry a(t.path / "registry");
  Registry b(t.path / "registry");
  const auto first = a.insert(p1_draft(t.path / "stage"));
  const auto second = b.insert(p1_draft(t.path / "stage"));
  CHECK(second.rfind("0002-", 0) == 0);
  a.reload();
  CHECK(a.find(first)->status == EntryStatus::superseded);
  CHECK(a.query(kP1)[0].id == second);
}

TEST_CASE("registry property suite") {
  TempDir t;
  const auto r = registry_property_suite(42, 120, t.path);
  CHECK(r.cases == 120);
  CHECK(r.operations >= r.cases);
  for (const auto& f : r.failures) FAIL_CHECK(f);
  CHECK(r.failures.empty());
}
