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

#include <string>
#include <string_view>

#include <json.hpp>

#include "ksynth/graph.hpp"

namespace ksynth {

/// Parses a trace document into a validated, topologically ordered graph
/// with inferred shapes. Entries of `dim_overrides` replace the document's
/// own dimension bindings before anything is evaluated.
///
/// Throws ParseError for malformed JSON and ValidationError for dangling
/// ids, cycles, unknown kinds, or shape mismatches.
CompGraph ingest_trace(std::string_view text, const DimBindings& dim_overrides = {});
CompGraph ingest_trace_json(const nlohmann::json& doc, const DimBindings& dim_overrides = {});
CompGraph load_trace_file(const std::string& path, const DimBindings& dim_overrides = {});

/// Serializes back to the trace schema. Raw (possibly symbolic) shapes and
/// attrs are preserved so the document can be re-ingested at other dims.
nlohmann::ordered_json to_trace_json(const CompGraph& g);

}  // namespace ksynth
