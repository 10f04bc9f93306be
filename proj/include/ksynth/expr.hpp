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
#include <map>
#include <string>
#include <string_view>

namespace ksynth {

using DimBindings = std::map<std::string, std::int64_t>;

/// Evaluates an integer dimension expression such as "3*C" or "KV*C/H".
/// Supports + - * / and parentheses over integer literals and named
/// dimensions. Division must be exact. Throws ValidationError otherwise.
std::int64_t eval_dim_expr(std::string_view text, const DimBindings& dims);

}  // namespace ksynth
