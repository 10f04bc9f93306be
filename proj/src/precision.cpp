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

#include "ksynth/precision.hpp"

#include <cfloat>
#include <cmath>

namespace ksynth {
namespace {

struct Format {
  int mantissa_bits;
  int min_exponent;  // exponent of the smallest normal
  double max_value;
};

Format format_of(DType t) {
  switch (t) {
    case DType::fp16:
      return {10, -14, 65504.0};
    case DType::bf16:
      return {7, -126, std::ldexp(2.0 - std::ldexp(1.0, -7), 127)};
    case DType::tf32:
      return {10, -126, std::ldexp(2.0 - std::ldexp(1.0, -10), 127)};
    case DType::fp32:
      break;
  }
  return {23, -126, static_cast<double>(FLT_MAX)};
}

}  // namespace

double max_finite(DType t) { return format_of(t).max_value; }

double round_to(double x, DType t) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  const Format f = format_of(t);
  int e = 0;
  std::frexp(x, &e);  // |x| = m * 2^e, m in [0.5, 1)
  const int lead = std::max(e - 1, f.min_exponent);
  const double quantum = std::ldexp(1.0, lead - f.mantissa_bits);
  const double r = std::nearbyint(x / quantum) * quantum;
  if (std::fabs(r) > f.max_value) return std::copysign(INFINITY, x);
  return r;
}

Emulated mixed_precision_emulate(const TensorValue& value, DType storage) {
  Emulated out{value, 0};
  out.value.meta.dtype = storage;
  for (auto& v : out.value.data) {
    const bool finite = std::isfinite(v);
    v = round_to(v, storage);
    if (finite && std::isinf(v)) ++out.overflow_count;
  }
  return out;
}

ReductionResult emulated_dot(const std::vector<double>& a, const std::vector<double>& b, DType operand,
                             DType accumulator) {
  if (a.size() != b.size()) throw ValidationError("emulated_dot: length mismatch");
  ReductionResult r;
  Accumulator acc(accumulator);
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc.add(round_to(a[i], operand) * round_to(b[i], operand));
    if (std::isinf(acc.value())) {
      r.overflow = true;
      r.overflow_at = static_cast<std::int64_t>(i);
      break;
    }
  }
  r.value = acc.value();
  return r;
}

}  // namespace ksynth
