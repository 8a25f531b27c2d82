#pragma once

#include "gridmcp/agent/agent.hpp"
#include "gridmcp/gateway/store.hpp"
#include "gridmcp/mcp/engine.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace gridmcp::gateway {

struct GatewayConfig {
    std::filesystem::path data_dir = "gridmcp-data";
    std::filesystem::path library_root;
    std::string token;
    agent::HttpAdapterConfig adapter; // endpoint empty: only the scripted provider is offered
    std::size_t max_rounds = 8;
    std::size_t queue_capacity = 64;
    std::chrono::milliseconds busy_wait{30000}; // wait for the engine before answering 409
};

/// Reads a JSON config file (optional) and applies GRIDMCP_DATA_DIR,
/// GRIDMCP_LIBRARY_ROOT, GRIDMCP_TOKEN, GRIDMCP_ADAPTER_ENDPOINT,
/// GRIDMCP_ADAPTER_MODEL and GRIDMCP_ADAPTER_KEY on top.
GatewayConfig load_gateway_config(const std::optional<std::filesystem::path>& file);

struct SessionRecord {
    std::string id;
    std::string title;
    std::string owner; // hash of the bearer token that created it
    std::optional<std::string> circuit; // library name or uploaded package name
    std::string provider = "scripted";  // "scripted" or "http"
    std::string model;
    std::optional<std::string> profile; // load shape applied to every load on activation
    std::vector<agent::ChatTurn> turns;
    nlohmann::json traces = nlohmann::json::array(); // one loop result per message
    std::string created_at;
    std::string updated_at;
};

nlohmann::json to_json(const SessionRecord& s);
/// Transcript the scripted provider replays when a message brings none;
/// picked by keywords in the user text.
nlohmann::json default_script(const std::string& text);
SessionRecord session_from_json(const nlohmann::json& j);

/// REST front end over one engine. Every engine access goes through tool
/// calls; sessions, custom shapes and uploaded packages persist in a
/// DocumentStore under data_dir.
class Gateway {
public:
    explicit Gateway(GatewayConfig config);
    ~Gateway();

    /// Registers the /api routes and the bearer-token check.
    void mount(httplib::Server& server);

    /// Holds the engine as a request would; other requests answer 409 once
    /// busy_wait expires.
    std::unique_lock<std::timed_mutex> lease_engine();

    mcp::Engine& engine() { return engine_; }
    DocumentStore& store() { return store_; }
    const GatewayConfig& config() const { return config_; }

private:
    struct Reply {
        int status = 200;
        nlohmann::json body;
    };

    Reply create_session(const nlohmann::json& body);
    Reply list_sessions();
    Reply get_session(const std::string& id);
    Reply post_message(const std::string& id, const nlohmann::json& body);
    Reply upload_circuit(const nlohmann::json& body);
    Reply list_circuits();
    Reply list_profiles();
    Reply list_providers();
    Reply session_tool(const std::string& id, const std::string& tool, const nlohmann::json& args);
    Reply session_qsts(const std::string& id);
    Reply session_export(const std::string& id, const std::string& format);

    std::optional<SessionRecord> load_session(const std::string& id);
    void save_session(SessionRecord& s);
    /// Loads the session's circuit and profile into the engine unless it is
    /// already active. Returns the failing envelope, if any.
    std::optional<nlohmann::json> activate(const SessionRecord& s);
    void persist_shapes();
    void restore_shapes();
    void restore_uploads();
    nlohmann::json call(const std::string& tool, const nlohmann::json& args);

    GatewayConfig config_;
    DocumentStore store_;
    mcp::Engine engine_;
    std::timed_mutex engine_lease_;   // one session context at a time
    std::optional<std::string> active_; // session whose context is loaded
};

} // namespace gridmcp::gateway
