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
#include <cstdint>
#include <vector>
#include <optional>

#include "ksynth/tensor.hpp"

namespace ksynth {

/// Rounds to the nearest value representable in `t` (ties to even),
/// including subnormals. Values past the largest finite magnitude after
/// rounding become +/-inf. fp32 is honored exactly; NaN passes through.
double round_to(double x, DType t);

/// Largest finite magnitude of the format.
double max_finite(DType t);

struct Emulated {
  TensorValue value;
  std::size_t overflow_count = 0;
  bool overflow() const { return overflow_count != 0; }
};

/// Element-wise storage rounding, widened back to fp64. Overflow is
/// flagged when a finite input rounds to infinity.
Emulated mixed_precision_emulate(const TensorValue& value, DType storage);

/// How a fused kernel stores operands and accumulates. Unset fields mean
/// exact fp64 arithmetic.
struct PrecisionPolicy {
  std::optional<DType> operand;
  std::optional<DType> accumulator;
  std::optional<DType> output;

  static PrecisionPolicy exact() { return {}; }
  /// Narrow operands, fp32 accumulation and fp32 output.
  static PrecisionPolicy mixed(DType operand) { return {operand, DType::fp32, DType::fp32}; }
  bool is_exact() const { return !operand && !accumulator && !output; }
};

/// Running sum rounded to the accumulator format after every addition.
class Accumulator {
 public:
  explicit Accumulator(std::optional<DType> format = std::nullopt) : format_(format) {}

  void add(double v) {
    sum_ += v;
    if (format_) sum_ = round_to(sum_, *format_);
  }
  double value() const { return sum_; }
  void reset() { sum_ = 0.0; }

 private:
  std::optional<DType> format_;
  double sum_ = 0.0;
};

struct ReductionResult {
  double value = 0.0;
  bool overflow = false;
  /// Index of the first addend after which the running sum was infinite.
  std::int64_t overflow_at = -1;
};

/// Dot product with operands stored in `operand` and the running sum kept
/// in `accumulator`, the way a GEMM mainloop reduces along K.
ReductionResult emulated_dot(const std::vector<double>& a, const std::vector<double>& b, DType operand,
                             DType accumulator);

inline double apply_optional(double x, const std::optional<DType>& t) { return t ? round_to(x, *t) : x; }

}  // namespace ksynth
