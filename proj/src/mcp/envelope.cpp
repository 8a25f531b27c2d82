#include "gridmcp/mcp/envelope.hpp"

#include <fmt/format.h>

namespace gridmcp::mcp {

ToolEnvelope ToolEnvelope::ok(std::string tool, nlohmann::json data)
{
    ToolEnvelope e;
    e.tool = std::move(tool);
    e.data = std::move(data);
    return e;
}

ToolEnvelope ToolEnvelope::fail(std::string tool, ErrorCode code, std::string message, std::string hint,
                                nlohmann::json data)
{
    ToolEnvelope e;
    e.success = false;
    e.tool = std::move(tool);
    e.data = std::move(data);
    if (!e.data.is_object()) {
        e.data = nlohmann::json::object();
    }
    e.data["error"] = {{"code", to_string(code)}, {"message", std::move(message)}};
    e.error_code = std::string(to_string(code));
    e.hint = hint.empty() ? std::string("check the tool arguments and try again") : std::move(hint);
    return e;
}

nlohmann::json to_json(const ToolEnvelope& env)
{
    nlohmann::json j = {{"success", env.success}, {"tool", env.tool}, {"data", env.data}};
    if (!env.success) {
        j["hint"] = env.hint.value_or("check the tool arguments and try again");
    }
    j["elapsed_ms"] = env.elapsed_ms;
    return j;
}

ToolEnvelope envelope_from_json(const nlohmann::json& j)
{
    ToolEnvelope e;
    e.success = j.value("success", false);
    e.tool = j.value("tool", std::string{});
    e.data = j.value("data", nlohmann::json::object());
    if (j.contains("hint")) {
        e.hint = j["hint"].get<std::string>();
    }
    if (e.data.contains("error") && e.data["error"].contains("code")) {
        e.error_code = e.data["error"]["code"].get<std::string>();
    }
    e.elapsed_ms = j.value("elapsed_ms", 0.0);
    return e;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string envelope_digest(const nlohmann::json& envelope)
{
    auto copy = envelope;
    if (copy.is_object()) {
        copy.erase("elapsed_ms");
    }
    return hex64(fnv1a(copy.dump()));
}

} // namespace gridmcp::mcp
