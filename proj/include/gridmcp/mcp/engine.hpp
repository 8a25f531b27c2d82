#pragma once

#include "gridmcp/mcp/envelope.hpp"
#include "gridmcp/mcp/executor.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gridmcp::mcp {

struct EngineConfig {
    std::filesystem::path library_root;
    std::vector<std::filesystem::path> extra_roots; // e.g. the gateway upload directory
    std::size_t queue_capacity = 64;
};

struct ToolSpec {
    std::string name;
    std::string category;
    std::string description;
    nlohmann::json input_schema;
};

/// The 36 tools in catalogue order.
const std::vector<ToolSpec>& tool_catalog();

/// Category names in catalogue order.
const std::vector<std::string>& tool_categories();

struct Resource {
    std::string uri;
    std::string name;
    std::string mime_type;
};

/// One simulation session: the loaded package, its mutable circuit, shapes
/// and results. Every tool call is serialized through a SerialExecutor.
class Engine {
public:
    explicit Engine(EngineConfig config);
    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Validates and dispatches one tool call. Never throws except EngineBusy
    /// when the request queue is full.
    ToolEnvelope call(const std::string& tool, const nlohmann::json& args);
    nlohmann::json call_json(const std::string& tool, const nlohmann::json& args);

    /// Hash of everything a tool can change.
    std::string state_digest();

    std::optional<std::string> circuit_name();
    std::vector<Resource> resources();
    /// Exact URI match only. Throws UnknownResource.
    std::string read_resource(const std::string& uri);

    /// System prompt with the per-unit convention, the voltage band and the
    /// active circuit name (or `circuit` when given).
    std::string system_prompt(const std::optional<std::string>& circuit = std::nullopt);

    const EngineConfig& config() const;
    SerialExecutor& executor();

    /// Test hook: called with the tool name right before each handler runs.
    void set_fault_injector(std::function<void(const std::string&)> injector);

    struct State; // defined in the implementation

private:
    std::unique_ptr<State> state_;
    SerialExecutor executor_;
};

} // namespace gridmcp::mcp
