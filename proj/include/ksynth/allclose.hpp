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

#include <cstdint>
#include <string>

#include "ksynth/tensor.hpp"

namespace ksynth {

struct ToleranceSpec {
  double rtol = 1e-3;
  double atol = 1e-5;
};

struct CloseReport {
  bool pass = true;
  double max_abs_diff = 0.0;
  /// Flat index of the element with the largest excess over its bound,
  /// or of the largest difference when everything passes.
  std::int64_t worst_index = -1;
  std::int64_t failures = 0;
};

/// Elementwise |a - b| <= atol + rtol * |b|; `b` is the reference.
/// Non-finite values pass only when both sides are identical.
/// Throws ValidationError on shape mismatch.
CloseReport allclose(const TensorValue& a, const TensorValue& b, const ToleranceSpec& tol = {});

}  // namespace ksynth
