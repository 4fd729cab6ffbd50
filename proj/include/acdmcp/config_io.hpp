#pragma once
/*
 * JSON configuration: one document maps onto SimConfig plus ExperimentSpec.
 * Every key is optional; unknown keys are rejected. Errors are reported as
 * std::invalid_argument("dotted.key: reason").
 *
 * Durations carry their unit in the key name (`_s`, `_ms`).
 */

#include <string>
#include <vector>

#include <json.hpp>

#include "acdmcp/harness.hpp"

namespace acdmcp::config {

using Json = nlohmann::ordered_json;

// Applies `path=value` to a document. The value is parsed as JSON when it
// parses, otherwise taken as a string. Intermediate objects are created.
void apply_override(Json& doc, const std::string& assignment);

// Strict decoding over the built-in defaults. The result is validated.
harness::ExperimentSpec decode(const Json& doc);

// Reads a file (path named in any error), applies overrides, decodes.
harness::ExperimentSpec load(const std::string& path, const std::vector<std::string>& overrides = {});
// Same, starting from an empty document.
harness::ExperimentSpec from_overrides(const std::vector<std::string>& overrides);

// Full document with every key, suitable as a reference config.
Json encode(const harness::ExperimentSpec& spec);

}  // namespace acdmcp::config
