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

#include "ksynth/dtype.hpp"

#include <algorithm>
#include <cctype>

namespace ksynth {

std::string_view to_string(DType t) {
  switch (t) {
    case DType::fp32: return "fp32";
    case DType::tf32: return "tf32";
    case DType::fp16: return "fp16";
    case DType::bf16: return "bf16";
  }
  return "fp32";
}

std::string_view to_string(Arch a) { return a == Arch::SM80 ? "SM80" : "SM90"; }

std::string_view arch_family(Arch a) { return a == Arch::SM80 ? "Ampere" : "Hopper"; }

namespace {
std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}
}  // namespace

std::optional<DType> parse_dtype(std::string_view s) {
  const std::string l = lower(s);
  if (l == "fp32" || l == "float32" || l == "f32") return DType::fp32;
  if (l == "tf32") return DType::tf32;
  if (l == "fp16" || l == "float16" || l == "half" || l == "f16") return DType::fp16;
  if (l == "bf16" || l == "bfloat16") return DType::bf16;
  return std::nullopt;
}

std::optional<Arch> parse_arch(std::string_view s) {
  const std::string l = lower(s);
  if (l.rfind("sm80", 0) == 0 || l == "ampere") return Arch::SM80;
  if (l.rfind("sm90", 0) == 0 || l == "hopper") return Arch::SM90;
  return std::nullopt;
}

DType dtype_or_throw(std::string_view s) {
  if (auto d = parse_dtype(s)) return *d;
  throw ValidationError("unknown dtype '" + std::string(s) + "'");
}

Arch arch_or_throw(std::string_view s) {
  if (auto a = parse_arch(s)) return *a;
  throw ValidationError("unknown arch '" + std::string(s) + "'");
}

}  // namespace ksynth
