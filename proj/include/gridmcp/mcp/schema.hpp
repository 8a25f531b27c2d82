#pragma once

#include <json.hpp>

#include <string>

namespace gridmcp::mcp {

struct SchemaIssue {
    std::string path;     // "" for the root, "bus", "multipliers[3]", "config.seed"
    std::string expected; // e.g. "number", "one of [csv, json]", "required field"
    std::string message;
};

struct Validated {
    bool ok = false;
    nlohmann::json value; // coerced arguments when ok
    SchemaIssue issue;    // first problem when not ok
};

/// Checks `value` against a JSON-Schema subset: type (string or list),
/// properties, required, additionalProperties (boolean), enum, minimum,
/// maximum, minLength, items, minItems, maxItems. Numeric strings are coerced
/// to numbers where the schema asks for number or integer.
Validated validate(const nlohmann::json& schema, const nlohmann::json& value);

} // namespace gridmcp::mcp
