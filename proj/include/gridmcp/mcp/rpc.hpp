#pragma once

#include "gridmcp/mcp/engine.hpp"

#include <json.hpp>

#include <atomic>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace gridmcp::mcp {

namespace rpc_error {
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kInternalError = -32603;
} // namespace rpc_error

inline constexpr const char* kProtocolVersion = "2025-06-18";
inline constexpr const char* kServerName = "gridmcp";
inline constexpr const char* kServerVersion = "1.0.0";

/// One MCP client session over a shared engine. Methods other than
/// initialize and ping are refused until the handshake.
class RpcSession {
public:
    explicit RpcSession(Engine& engine) : engine_(engine) {}

    /// Handles a request, notification or batch. Returns nullopt when nothing
    /// is to be sent back (notifications only).
    std::optional<nlohmann::json> handle(const nlohmann::json& message);
    /// Parses one line/body and handles it; "" when there is no reply.
    std::string handle_text(std::string_view text);

    bool initialized() const { return initialized_; }

private:
    std::optional<nlohmann::json> handle_one(const nlohmann::json& message);
    nlohmann::json dispatch(const std::string& method, const nlohmann::json& params);

    Engine& engine_;
    std::atomic<bool> initialized_{false};
};

nlohmann::json rpc_error_response(const nlohmann::json& id, int code, const std::string& message,
                                  nlohmann::json data = nullptr);

/// Line-delimited JSON-RPC over a stream pair until EOF.
void serve_stdio(Engine& engine, std::istream& in, std::ostream& out);

/// Registers POST `path` on an httplib server. Sessions are keyed by the
/// Mcp-Session-Id header, issued on initialize.
class HttpTransport {
public:
    HttpTransport(Engine& engine, httplib::Server& server, const std::string& path = "/mcp");

    std::size_t session_count() const;

private:
    Engine& engine_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<RpcSession>> sessions_;
    std::uint64_t counter_ = 0;
};

} // namespace gridmcp::mcp
