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

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ksynth {

/// Raised for malformed documents and invariant violations on input data.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a document cannot be parsed at all.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType { fp32, tf32, fp16, bf16 };

enum class Arch { SM80, SM90 };

/// Storage width in bytes. tf32 is stored in a 32-bit container.
constexpr std::size_t byte_width(DType t) {
  switch (t) {
    case DType::fp32:
    case DType::tf32:
      return 4;
    case DType::fp16:
    case DType::bf16:
      return 2;
  }
  return 4;
}

std::string_view to_string(DType t);
std::string_view to_string(Arch a);

std::optional<DType> parse_dtype(std::string_view s);
/// Accepts "SM80", "sm80", "SM90 (Hopper)" and similar spellings.
std::optional<Arch> parse_arch(std::string_view s);

DType dtype_or_throw(std::string_view s);
Arch arch_or_throw(std::string_view s);

/// "Ampere" / "Hopper".
std::string_view arch_family(Arch a);

}  // namespace ksynth
