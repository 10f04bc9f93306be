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

#include "ksynth/allclose.hpp"

#include <cmath>
#include <limits>

namespace ksynth {

CloseReport allclose(const TensorValue& a, const TensorValue& b, const ToleranceSpec& tol) {
  if (tol.rtol < 0 || tol.atol < 0) throw ValidationError("tolerances must be non-negative");
  if (a.shape() != b.shape()) {
    throw ValidationError("allclose: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  CloseReport r;
  double worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i], y = b.data[i];
    double diff, excess;
    if (!std::isfinite(x) || !std::isfinite(y)) {
      const bool same = x == y;
      diff = same ? 0.0 : std::numeric_limits<double>::infinity();
      excess = same ? -1.0 : diff;
    } else {
      diff = std::fabs(x - y);
      excess = diff - (tol.atol + tol.rtol * std::fabs(y));
    }
    if (excess > 0) {
      r.pass = false;
      ++r.failures;
    }
    if (diff > r.max_abs_diff || r.worst_index < 0) r.max_abs_diff = std::max(r.max_abs_diff, diff);
    if (excess > worst_excess) {
      worst_excess = excess;
      r.worst_index = static_cast<std::int64_t>(i);
    }
  }
  return r;
}

}  // namespace ksynth
