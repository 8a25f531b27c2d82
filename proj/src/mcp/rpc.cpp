#include "gridmcp/mcp/rpc.hpp"

#include "gridmcp/error.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <iostream>
#include <random>
#include <set>

namespace gridmcp::mcp {

using nlohmann::json;

namespace {

struct RpcFailure {
    int code;
    std::string message;
    json data;
};

json prompt_descriptor()
{
    return {{"name", "power_engineering"},
            {"description", "System prompt with the per-unit convention, the 0.95-1.05 p.u. band and the circuit"},
            {"arguments", json::array({{{"name", "circuit"},
                                        {"description", "Circuit name (defaults to the loaded circuit)"},
                                        {"required", false}}})}};
}

json tool_descriptor(const ToolSpec& t)
{
    return {{"name", t.name}, {"description", t.description}, {"inputSchema", t.input_schema},
            {"category", t.category}};
}

} // namespace

json rpc_error_response(const json& id, int code, const std::string& message, json data)
{
    json err = {{"code", code}, {"message", message}};
    if (!data.is_null()) {
        err["data"] = std::move(data);
    }
    return {{"jsonrpc", "2.0"}, {"id", id}, {"error", std::move(err)}};
}

std::string RpcSession::handle_text(std::string_view text)
{
    json message;
    try {
        message = json::parse(text);
    } catch (const json::parse_error& e) {
        return rpc_error_response(nullptr, rpc_error::kParseError, "Parse error",
                                  {{"detail", e.what()}, {"hint", "send one JSON-RPC 2.0 object per message"}})
            .dump();
    }
    auto reply = handle(message);
    return reply ? reply->dump() : std::string();
}

std::optional<json> RpcSession::handle(const json& message)
{
    if (message.is_array()) {
        if (message.empty()) {
            return rpc_error_response(nullptr, rpc_error::kInvalidRequest, "Invalid Request",
                                      {{"hint", "a batch must contain at least one request"}});
        }
        json replies = json::array();
        for (const auto& m : message) {
            if (auto r = handle_one(m)) {
                replies.push_back(std::move(*r));
            }
        }
        if (replies.empty()) {
            return std::nullopt;
        }
        return replies;
    }
    return handle_one(message);
}

std::optional<json> RpcSession::handle_one(const json& message)
{
    const json id = message.is_object() && message.contains("id") ? message["id"] : json(nullptr);
    const bool valid_id = id.is_null() || id.is_string() || id.is_number_integer();
    if (!message.is_object() || message.value("jsonrpc", "") != "2.0" || !message.contains("method")
        || !message["method"].is_string() || !valid_id) {
        return rpc_error_response(valid_id ? id : json(nullptr), rpc_error::kInvalidRequest, "Invalid Request",
                                  {{"hint", "send {\"jsonrpc\":\"2.0\",\"id\":...,\"method\":...}"}});
    }
    const bool notification = !message.contains("id");
    const auto method = message["method"].get<std::string>();
    const json params = message.value("params", json::object());
    try {
        if (!params.is_object()) {
            throw RpcFailure{rpc_error::kInvalidParams, "Invalid params", {{"hint", "params must be an object"}}};
        }
        json result = dispatch(method, params);
        if (notification) {
            return std::nullopt;
        }
        return json{{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
    } catch (const RpcFailure& f) {
        if (notification) {
            return std::nullopt;
        }
        return rpc_error_response(id, f.code, f.message, f.data);
    } catch (const Error& e) {
        if (notification) {
            return std::nullopt;
        }
        if (e.code() == ErrorCode::EngineBusy) {
            return rpc_error_response(id, rpc_error::kInternalError, "Engine busy",
                                      {{"code", "EngineBusy"}, {"hint", "the request queue is full; retry shortly"}});
        }
        return rpc_error_response(id, rpc_error::kInternalError, e.what(), {{"code", to_string(e.code())}});
    }
}

json RpcSession::dispatch(const std::string& method, const json& params)
{
    if (method == "initialize") {
        initialized_ = true;
        return {{"protocolVersion", params.value("protocolVersion", std::string(kProtocolVersion))},
                {"capabilities",
                 {{"tools", {{"listChanged", false}}},
                  {"resources", {{"listChanged", false}, {"subscribe", false}}},
                  {"prompts", {{"listChanged", false}}}}},
                {"serverInfo", {{"name", kServerName}, {"version", kServerVersion}}},
                {"instructions", "Distribution power-flow tools. Voltages are per-unit; limits 0.95-1.05 p.u."}};
    }
    if (method == "ping") {
        return json::object();
    }
    if (method == "notifications/initialized" || method == "notifications/cancelled") {
        return json::object();
    }
    static const std::set<std::string> known{"tools/list",     "tools/call",   "resources/list",
                                             "resources/read", "prompts/list", "prompts/get"};
    if (known.count(method) == 0) {
        throw RpcFailure{rpc_error::kMethodNotFound, "Method not found",
                         {{"method", method}, {"hint", "supported: initialize, ping, tools/*, resources/*, prompts/*"}}};
    }
    if (!initialized_) {
        throw RpcFailure{rpc_error::kInvalidRequest, "Session not initialized",
                         {{"hint", "initialize the session first"}}};
    }
    if (method == "tools/list") {
        json tools = json::array();
        for (const auto& t : tool_catalog()) {
            tools.push_back(tool_descriptor(t));
        }
        return {{"tools", tools}};
    }
    if (method == "tools/call") {
        if (!params.contains("name") || !params["name"].is_string()) {
            throw RpcFailure{rpc_error::kInvalidParams, "Invalid params",
                             {{"hint", "tools/call needs params.name (string) and optional params.arguments"}}};
        }
        const json args = params.value("arguments", json::object());
        const auto env = engine_.call_json(params["name"].get<std::string>(), args);
        const bool failed = !env.value("success", false);
        return {{"content", json::array({{{"type", "text"}, {"text", env.dump()}}})},
                {"structuredContent", env},
                {"isError", failed}};
    }
    if (method == "resources/list") {
        json list = json::array();
        for (const auto& r : engine_.resources()) {
            list.push_back({{"uri", r.uri}, {"name", r.name}, {"mimeType", r.mime_type}});
        }
        return {{"resources", list}};
    }
    if (method == "resources/read") {
        if (!params.contains("uri") || !params["uri"].is_string()) {
            throw RpcFailure{rpc_error::kInvalidParams, "Invalid params", {{"hint", "resources/read needs params.uri"}}};
        }
        const auto uri = params["uri"].get<std::string>();
        try {
            const auto body = engine_.read_resource(uri);
            std::string mime = "text/plain";
            for (const auto& r : engine_.resources()) {
                if (r.uri == uri) {
                    mime = r.mime_type;
                }
            }
            return {{"contents", json::array({{{"uri", uri}, {"mimeType", mime}, {"text", body}}})}};
        } catch (const Error& e) {
            if (e.code() != ErrorCode::UnknownResource) {
                throw;
            }
            throw RpcFailure{rpc_error::kInvalidParams, e.what(),
                             {{"code", "UnknownResource"}, {"hint", "call resources/list for the exact URIs"}}};
        }
    }
    if (method == "prompts/list") {
        return {{"prompts", json::array({prompt_descriptor()})}};
    }
    // prompts/get
    if (params.value("name", "") != "power_engineering") {
        throw RpcFailure{rpc_error::kInvalidParams, "Unknown prompt", {{"hint", "use prompt 'power_engineering'"}}};
    }
    const json args = params.value("arguments", json::object());
    std::optional<std::string> circuit;
    if (args.is_object() && args.contains("circuit") && args["circuit"].is_string()) {
        circuit = args["circuit"].get<std::string>();
    }
    const auto text = engine_.system_prompt(circuit);
    return {{"description", "Power-engineering system prompt"},
            {"messages", json::array({{{"role", "user"}, {"content", {{"type", "text"}, {"text", text}}}}})}};
}

void serve_stdio(Engine& engine, std::istream& in, std::ostream& out)
{
    RpcSession session(engine);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto reply = session.handle_text(line);
        if (!reply.empty()) {
            out << reply << '\n';
            out.flush();
        }
    }
}

HttpTransport::HttpTransport(Engine& engine, httplib::Server& server, const std::string& path) : engine_(engine)
{
    server.Post(path, [this](const httplib::Request& req, httplib::Response& res) {
        std::shared_ptr<RpcSession> session;
        std::string issued;
        const auto header = req.get_header_value("Mcp-Session-Id");
        {
            std::lock_guard lock(mutex_);
            if (auto it = sessions_.find(header); !header.empty() && it != sessions_.end()) {
                session = it->second;
            }
        }
        if (!session) {
            json probe;
            try {
                probe = json::parse(req.body);
            } catch (const json::parse_error&) {
            }
            const bool init = probe.is_object() && probe.value("method", "") == "initialize";
            if (init) {
                std::lock_guard lock(mutex_);
                std::random_device rd;
                issued = fmt::format("{:08x}{:08x}{:04x}", rd(), rd(), ++counter_ & 0xffff);
                session = std::make_shared<RpcSession>(engine_);
                sessions_[issued] = session;
            } else if (!header.empty()) {
                res.status = 404;
                res.set_content(rpc_error_response(nullptr, rpc_error::kInvalidRequest, "Unknown session",
                                                   {{"hint", "initialize the session first"}})
                                    .dump(),
                                "application/json");
                return;
            } else {
                // No session: a fresh, uninitialized one answers (and refuses tool methods).
                session = std::make_shared<RpcSession>(engine_);
            }
        }
        const auto reply = session->handle_text(req.body);
        if (!issued.empty()) {
            res.set_header("Mcp-Session-Id", issued);
        }
        if (reply.empty()) {
            res.status = 202;
            return;
        }
        res.set_content(reply, "application/json");
    });
}

std::size_t HttpTransport::session_count() const
{
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

} // namespace gridmcp::mcp
