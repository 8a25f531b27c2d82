#pragma once

#include "gridmcp/error.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace gridmcp::mcp {

/// Uniform tool result. `hint` is present exactly when success is false.
struct ToolEnvelope {
    bool success = true;
    std::string tool;
    nlohmann::json data = nlohmann::json::object();
    std::optional<std::string> hint;
    std::optional<std::string> error_code; // ErrorCode name on failure
    double elapsed_ms = 0.0;

    static ToolEnvelope ok(std::string tool, nlohmann::json data);
    static ToolEnvelope fail(std::string tool, ErrorCode code, std::string message, std::string hint,
                             nlohmann::json data = nlohmann::json::object());
};

nlohmann::json to_json(const ToolEnvelope& env);
ToolEnvelope envelope_from_json(const nlohmann::json& j);

/// FNV-1a over the canonical dump of an envelope without elapsed_ms, so the
/// digest only changes when the content does.
std::string envelope_digest(const nlohmann::json& envelope);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 1469598103934665603ULL);
std::string hex64(std::uint64_t v);

} // namespace gridmcp::mcp
