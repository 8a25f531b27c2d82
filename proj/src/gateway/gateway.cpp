#include "gridmcp/gateway/gateway.hpp"

#include "gridmcp/dsspkg/package.hpp"
#include "gridmcp/error.hpp"
#include "gridmcp/mcp/envelope.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace gridmcp::gateway {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso()
{
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)), ms);
}

std::string new_session_id()
{
    static std::mt19937_64 rng{std::random_device{}()};
    static std::mutex m;
    std::lock_guard lock(m);
    return fmt::format("s-{:012x}", rng() & 0xffffffffffffULL);
}

std::optional<std::string> env(const char* name)
{
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') {
        return std::nullopt;
    }
    return std::string(v);
}

json error_body(const std::string& code, const std::string& message, const std::string& hint = "")
{
    json body = {{"error", {{"code", code}, {"message", message}}}};
    if (!hint.empty()) {
        body["hint"] = hint;
    }
    return body;
}

int status_for(const std::string& code)
{
    if (code == "NotFound") {
        return 404;
    }
    if (code == "EngineBusy") {
        return 409;
    }
    if (code == "AdapterUnavailable") {
        return 502;
    }
    return 422;
}

/// Failure envelope to an HTTP error reply body.
json envelope_error(const json& env)
{
    const auto& err = env["data"]["error"];
    json body = error_body(err.value("code", "InvalidArgument"), err.value("message", ""), env.value("hint", ""));
    body["tool"] = env.value("tool", "");
    return body;
}

json tool_descriptors()
{
    json out = json::array();
    for (const auto& t : mcp::tool_catalog()) {
        out.push_back({{"name", t.name}, {"description", t.description}, {"inputSchema", t.input_schema}});
    }
    return out;
}

bool contains_any(const std::string& text, std::initializer_list<const char*> words)
{
    std::string lower = text;
    for (auto& c : lower) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    for (const char* w : words) {
        if (lower.find(w) != std::string::npos) {
            return true;
        }
    }
    return false;
}

json call_item(const std::string& tool, json args = json::object())
{
    return {{"tool_calls", json::array({{{"tool", tool}, {"args", std::move(args)}}})}};
}

} // namespace

/// Transcript used by the scripted provider when a message carries none.
json default_script(const std::string& text)
{
    if (contains_any(text, {"qsts", "time series", "time-series", "daily"})) {
        return json::array(
            {call_item("run_qsts", {{"steps", 24}}),
             "Ran 24 steps. Minimum voltage {{run_qsts/data/summary/min_voltage/per_unit}} p.u. at bus "
             "{{run_qsts/data/summary/min_voltage/bus}}; {{run_qsts/data/summary/violation_step_count}} steps "
             "have a violation."});
    }
    if (contains_any(text, {"topology", "map", "graph"})) {
        return json::array({call_item("get_topology"),
                            "Here is the network graph; power enters at bus {{get_topology/data/source}}."});
    }
    if (contains_any(text, {"voltage", "solve", "power flow"})) {
        return json::array(
            {call_item("solve_power_flow"), call_item("get_all_bus_voltages"),
             "Solved. Minimum {{solve_power_flow/data/min_voltage/per_unit}} p.u. at bus "
             "{{solve_power_flow/data/min_voltage/bus}}, maximum {{solve_power_flow/data/max_voltage/per_unit}} p.u. "
             "at bus {{solve_power_flow/data/max_voltage/bus}}; {{solve_power_flow/data/violation_count}} buses "
             "are outside 0.95-1.05 p.u."});
    }
    return json::array({"I can solve the power flow, run a daily time series or show the network topology. "
                        "Ask about the bus voltages to start."});
}

GatewayConfig load_gateway_config(const std::optional<fs::path>& file)
{
    GatewayConfig c;
    if (file) {
        std::ifstream in(*file);
        if (!in) {
            throw Error(ErrorCode::NotFound, fmt::format("config file '{}' not found", file->string()));
        }
        const auto j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(ErrorCode::ParseError, fmt::format("config file '{}' is not a JSON object", file->string()));
        }
        c.data_dir = j.value("data_dir", c.data_dir.string());
        c.library_root = j.value("library_root", c.library_root.string());
        c.token = j.value("token", c.token);
        c.max_rounds = j.value("max_rounds", c.max_rounds);
        c.queue_capacity = j.value("queue_capacity", c.queue_capacity);
        c.busy_wait = std::chrono::milliseconds(j.value("busy_wait_ms", c.busy_wait.count()));
        if (j.contains("adapter") && j["adapter"].is_object()) {
            const auto& a = j["adapter"];
            c.adapter.endpoint = a.value("endpoint", c.adapter.endpoint);
            c.adapter.model = a.value("model", c.adapter.model);
            c.adapter.api_key = a.value("api_key", c.adapter.api_key);
            c.adapter.timeout = std::chrono::milliseconds(a.value("timeout_ms", c.adapter.timeout.count()));
        }
    }
    if (auto v = env("GRIDMCP_DATA_DIR")) {
        c.data_dir = *v;
    }
    if (auto v = env("GRIDMCP_LIBRARY_ROOT")) {
        c.library_root = *v;
    }
    if (auto v = env("GRIDMCP_TOKEN")) {
        c.token = *v;
    }
    if (auto v = env("GRIDMCP_ADAPTER_ENDPOINT")) {
        c.adapter.endpoint = *v;
    }
    if (auto v = env("GRIDMCP_ADAPTER_MODEL")) {
        c.adapter.model = *v;
    }
    if (auto v = env("GRIDMCP_ADAPTER_KEY")) {
        c.adapter.api_key = *v;
    }
    return c;
}

json to_json(const SessionRecord& s)
{
    json turns = json::array();
    for (const auto& t : s.turns) {
        turns.push_back(agent::to_json(t));
    }
    return {{"id", s.id},
            {"title", s.title},
            {"owner", s.owner},
            {"circuit", s.circuit ? json(*s.circuit) : json(nullptr)},
            {"provider", s.provider},
            {"model", s.model},
            {"profile", s.profile ? json(*s.profile) : json(nullptr)},
            {"turns", turns},
            {"traces", s.traces},
            {"created_at", s.created_at},
            {"updated_at", s.updated_at}};
}

SessionRecord session_from_json(const json& j)
{
    SessionRecord s;
    s.id = j.at("id").get<std::string>();
    s.title = j.value("title", "");
    s.owner = j.value("owner", "");
    if (j.contains("circuit") && j["circuit"].is_string()) {
        s.circuit = j["circuit"].get<std::string>();
    }
    s.provider = j.value("provider", "scripted");
    s.model = j.value("model", "");
    if (j.contains("profile") && j["profile"].is_string()) {
        s.profile = j["profile"].get<std::string>();
    }
    for (const auto& t : j.value("turns", json::array())) {
        s.turns.push_back(agent::turn_from_json(t));
    }
    s.traces = j.value("traces", json::array());
    s.created_at = j.value("created_at", "");
    s.updated_at = j.value("updated_at", "");
    return s;
}

Gateway::Gateway(GatewayConfig config)
    : config_(std::move(config)),
      store_(config_.data_dir),
      engine_(mcp::EngineConfig{config_.library_root, {config_.data_dir / "uploads"}, config_.queue_capacity})
{
    if (config_.token.empty()) {
        throw Error(ErrorCode::InvalidArgument, "the gateway needs a bearer token (GRIDMCP_TOKEN)");
    }
    fs::create_directories(config_.data_dir / "uploads");
    restore_uploads();
    restore_shapes();
}

Gateway::~Gateway() = default;

std::unique_lock<std::timed_mutex> Gateway::lease_engine()
{
    return std::unique_lock<std::timed_mutex>(engine_lease_);
}

json Gateway::call(const std::string& tool, const json& args)
{
    return engine_.call_json(tool, args);
}

void Gateway::restore_uploads()
{
    for (const auto& doc : store_.list("circuits")) {
        const auto dir = config_.data_dir / "uploads" / doc.id;
        if (fs::exists(dir)) {
            continue;
        }
        const auto blob = store_.get_blob(doc.body.value("hash", ""));
        const auto files = blob ? json::parse(*blob, nullptr, false) : json();
        if (!files.is_object()) {
            continue; // metadata without content; listed but not loadable
        }
        for (const auto& [rel, text] : files.items()) {
            const auto target = dir / rel;
            fs::create_directories(target.parent_path());
            std::ofstream(target, std::ios::binary) << text.get<std::string>();
        }
    }
}

void Gateway::restore_shapes()
{
    for (const auto& doc : store_.list("shapes")) {
        json args = {{"name", doc.id},
                     {"multipliers", doc.body.value("multipliers", json::array())},
                     {"interval_hours", doc.body.value("interval_hours", 1.0)}};
        auto env = call("create_loadshape", args);
        if (!env.value("success", false)) {
            call("edit_loadshape", args);
        }
    }
}

void Gateway::persist_shapes()
{
    const auto env = call("list_loadshapes", json::object());
    if (!env.value("success", false)) {
        return;
    }
    std::set<std::string> live;
    for (const auto& s : env["data"]["shapes"]) {
        if (s.value("source", "") == "builtin") {
            continue;
        }
        const auto name = s.value("name", "");
        if (!DocumentStore::valid_id(name)) {
            continue;
        }
        live.insert(name);
        const auto full = call("get_loadshape", {{"name", name}});
        if (!full.value("success", false)) {
            continue;
        }
        const json body = {{"multipliers", full["data"]["multipliers"]},
                           {"interval_hours", full["data"].value("interval_hours", 1.0)}};
        const auto prev = store_.get("shapes", name);
        if (!prev || prev->body != body) {
            store_.put("shapes", name, body);
        }
    }
    for (const auto& doc : store_.list("shapes")) {
        if (!live.count(doc.id)) {
            store_.remove("shapes", doc.id);
        }
    }
}

std::optional<SessionRecord> Gateway::load_session(const std::string& id)
{
    const auto doc = store_.get("sessions", id);
    if (!doc) {
        return std::nullopt;
    }
    try {
        return session_from_json(doc->body);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void Gateway::save_session(SessionRecord& s)
{
    s.updated_at = now_iso();
    store_.put("sessions", s.id, to_json(s));
}

std::optional<json> Gateway::activate(const SessionRecord& s)
{
    if (active_ == s.id) {
        return std::nullopt;
    }
    active_.reset();
    if (s.circuit) {
        const bool uploaded = store_.get("circuits", *s.circuit).has_value();
        auto env = uploaded ? call("load_circuit", {{"path", *s.circuit}})
                            : call("load_library_circuit", {{"name", *s.circuit}});
        if (!env.value("success", false)) {
            return env;
        }
        if (s.profile) {
            env = call("assign_loadshape", {{"load", "*"}, {"shape", *s.profile}});
            if (!env.value("success", false)) {
                return env;
            }
        }
    }
    active_ = s.id;
    return std::nullopt;
}

Gateway::Reply Gateway::create_session(const json& body)
{
    SessionRecord s;
    s.id = new_session_id();
    s.title = body.value("title", "");
    s.owner = mcp::hex64(mcp::fnv1a(config_.token));
    s.provider = body.value("provider", "scripted");
    s.model = body.value("model", s.provider == "http" ? config_.adapter.model : "");
    if (s.provider != "scripted" && s.provider != "http") {
        return {422, error_body("InvalidArgument", fmt::format("unknown provider '{}'", s.provider),
                                "GET /api/providers lists the providers")};
    }
    if (s.provider == "http" && config_.adapter.endpoint.empty()) {
        return {422, error_body("AdapterUnavailable", "no model endpoint is configured",
                                "set GRIDMCP_ADAPTER_ENDPOINT or use the scripted provider")};
    }
    if (body.contains("circuit") && body["circuit"].is_string()) {
        s.circuit = body["circuit"].get<std::string>();
    }
    if (body.contains("profile") && body["profile"].is_string()) {
        s.profile = body["profile"].get<std::string>();
    }
    std::unique_lock lease(engine_lease_, std::defer_lock);
    if (!lease.try_lock_for(config_.busy_wait)) {
        return {409, error_body("EngineBusy", "another request holds the engine", "retry shortly")};
    }
    if (!s.circuit) {
        const auto lib = call("list_library_circuits", json::object());
        if (lib.value("success", false) && !lib["data"]["circuits"].empty()) {
            s.circuit = lib["data"]["circuits"][0].value("name", "");
        }
    }
    if (s.title.empty()) {
        s.title = s.circuit ? *s.circuit : "session";
    }
    if (auto failed = activate(s)) {
        return {status_for((*failed)["data"]["error"].value("code", "")), envelope_error(*failed)};
    }
    s.created_at = now_iso();
    save_session(s);
    auto out = to_json(s);
    out["version"] = 1;
    return {201, out};
}

Gateway::Reply Gateway::list_sessions()
{
    json list = json::array();
    for (const auto& doc : store_.list("sessions")) {
        const auto& b = doc.body;
        list.push_back({{"id", doc.id},
                        {"title", b.value("title", "")},
                        {"circuit", b.value("circuit", json(nullptr))},
                        {"provider", b.value("provider", "")},
                        {"model", b.value("model", "")},
                        {"profile", b.value("profile", json(nullptr))},
                        {"turn_count", b.value("turns", json::array()).size()},
                        {"created_at", b.value("created_at", "")},
                        {"updated_at", b.value("updated_at", "")},
                        {"version", doc.version}});
    }
    return {200, {{"sessions", list}, {"count", list.size()}}};
}

Gateway::Reply Gateway::get_session(const std::string& id)
{
    const auto doc = store_.get("sessions", id);
    if (!doc) {
        return {404, error_body("NotFound", fmt::format("no session '{}'", id), "GET /api/sessions lists them")};
    }
    auto out = doc->body;
    out["version"] = doc->version;
    return {200, out};
}

Gateway::Reply Gateway::post_message(const std::string& id, const json& body)
{
    if (!body.contains("text") || !body["text"].is_string() || body["text"].get<std::string>().empty()) {
        return {422, error_body("SchemaViolation", "body needs a non-empty 'text' string", "send {\"text\": ...}")};
    }
    const auto text = body["text"].get<std::string>();
    std::unique_lock lease(engine_lease_, std::defer_lock);
    if (!lease.try_lock_for(config_.busy_wait)) {
        return {409, error_body("EngineBusy", "another request holds the engine", "retry shortly")};
    }
    auto s = load_session(id);
    if (!s) {
        return {404, error_body("NotFound", fmt::format("no session '{}'", id), "GET /api/sessions lists them")};
    }
    if (auto failed = activate(*s)) {
        return {status_for((*failed)["data"]["error"].value("code", "")), envelope_error(*failed)};
    }

    std::unique_ptr<agent::Adapter> adapter;
    if (s->provider == "http") {
        auto cfg = config_.adapter;
        if (!s->model.empty()) {
            cfg.model = s->model;
        }
        adapter = std::make_unique<agent::HttpChatAdapter>(cfg);
    } else {
        const json script = body.contains("script") ? body["script"] : default_script(text);
        try {
            agent::ScriptedAdapter::check_transcript(script);
        } catch (const Error& e) {
            return {422, error_body(std::string(to_string(e.code())), e.what(), "see the scripted transcript format")};
        }
        adapter = std::make_unique<agent::ScriptedAdapter>(script);
    }

    agent::ToolDispatch dispatch = [this](const std::string& tool, const json& args) { return call(tool, args); };
    agent::LoopConfig loop;
    loop.max_rounds = config_.max_rounds;
    const auto before = s->turns.size();
    const auto result = agent::tool_use_loop(*adapter, dispatch, s->turns, text, engine_.system_prompt(s->circuit),
                                             tool_descriptors(), loop);

    // Circuit changes made in the conversation become the session's context.
    for (const auto& e : result.trace) {
        if (!e.envelope.value("success", false)) {
            continue;
        }
        if (e.tool == "load_library_circuit") {
            s->circuit = e.args.value("name", "");
        } else if (e.tool == "load_circuit") {
            s->circuit = e.args.value("path", "");
        }
    }
    persist_shapes();

    auto result_json = agent::to_json(result);
    result_json["turn_index"] = before;
    s->traces.push_back(result_json);
    save_session(*s);

    json out = {{"session_id", s->id},
                {"status", std::string(agent::to_string(result.status))},
                {"final", s->turns.size() > before + 1 ? agent::to_json(s->turns.back()) : json(nullptr)},
                {"final_text", result.final_text},
                {"trace", result_json["trace"]},
                {"rounds", result.rounds},
                {"retries", result.retries}};
    if (result.error_code) {
        out["error"] = {{"code", *result.error_code}, {"message", result.error_message.value_or("")}};
    }
    if (result.status == agent::LoopStatus::AdapterUnavailable) {
        out["hint"] = "the model endpoint did not answer; the message is kept in the session";
        return {502, out};
    }
    return {200, out};
}

Gateway::Reply Gateway::upload_circuit(const json& body)
{
    const auto name = body.value("name", "");
    if (!DocumentStore::valid_id(name)) {
        return {422, error_body("InvalidArgument", fmt::format("invalid circuit name '{}'", name),
                                "use letters, digits, '-', '_' and '.'")};
    }
    if (!body.contains("files") || !body["files"].is_object() || body["files"].empty()) {
        return {422, error_body("SchemaViolation", "body needs a 'files' object of path to text",
                                "send {\"name\": ..., \"files\": {\"master.dss\": ...}}")};
    }
    const auto uploads = config_.data_dir / "uploads";
    const auto stage = uploads / ("." + name + ".staging");
    fs::remove_all(stage);
    fs::create_directories(stage);
    auto fail = [&](const std::string& code, const std::string& message, const std::string& path) -> Reply {
        fs::remove_all(stage);
        auto b = error_body(code, message, code == "PathEscapesWhitelist"
                                               ? "file names must stay inside the package directory"
                                               : "fix the package and upload it again");
        if (!path.empty()) {
            b["path"] = path;
        }
        return {422, b};
    };

    std::unique_lock lease(engine_lease_, std::defer_lock);
    if (!lease.try_lock_for(config_.busy_wait)) {
        fs::remove_all(stage);
        return {409, error_body("EngineBusy", "another request holds the engine", "retry shortly")};
    }
    dss::PathGuard guard(stage);
    for (const auto& [rel, text] : body["files"].items()) {
        if (!text.is_string()) {
            return fail("SchemaViolation", fmt::format("file '{}' must be a string", rel), rel);
        }
        fs::path target;
        try {
            if (fs::path(rel).is_absolute() || rel.empty()) {
                throw Error(ErrorCode::PathEscapesWhitelist, fmt::format("'{}' is not a relative path", rel));
            }
            target = guard.resolve(rel);
        } catch (const Error& e) {
            return fail(std::string(to_string(e.code())), e.what(), rel);
        }
        fs::create_directories(target.parent_path());
        std::ofstream(target, std::ios::binary) << text.get<std::string>();
    }

    json summary;
    try {
        const auto loaded = dss::load_circuit_package(guard, stage);
        summary = {{"name", name},
                   {"manifest", dss::to_json(loaded.package.manifest)},
                   {"bus_count", loaded.built.circuit.buses.size()},
                   {"warnings", loaded.warnings}};
    } catch (const Error& e) {
        return fail(std::string(to_string(e.code())), e.what(), "");
    }

    const auto dest = uploads / name;
    fs::remove_all(dest);
    fs::rename(stage, dest);
    summary["hash"] = store_.put_blob(body["files"].dump());
    summary["files"] = json::array();
    for (const auto& [rel, _] : body["files"].items()) {
        summary["files"].push_back(rel);
    }
    summary["uploaded_at"] = now_iso();
    const auto version = store_.put("circuits", name, summary);
    // A session on this circuit must reload the new files.
    active_.reset();
    summary["version"] = version;
    return {201, summary};
}

Gateway::Reply Gateway::list_circuits()
{
    json list = json::array();
    std::unique_lock lease(engine_lease_, std::defer_lock);
    if (!lease.try_lock_for(config_.busy_wait)) {
        return {409, error_body("EngineBusy", "another request holds the engine", "retry shortly")};
    }
    const auto lib = call("list_library_circuits", json::object());
    if (lib.value("success", false)) {
        for (auto c : lib["data"]["circuits"]) {
            c["source"] = "library";
            list.push_back(std::move(c));
        }
    }
    for (const auto& doc : store_.list("circuits")) {
        auto c = doc.body;
        c["source"] = "upload";
        c["version"] = doc.version;
        list.push_back(std::move(c));
    }
    return {200, {{"circuits", list}, {"count", list.size()}}};
}

Gateway::Reply Gateway::list_profiles()
{
    std::unique_lock lease(engine_lease_, std::defer_lock);
    if (!lease.try_lock_for(config_.busy_wait)) {
        return {409, error_body("EngineBusy", "another request holds the engine", "retry shortly")};
    }
    const auto env = call("list_profiles", json::object());
    if (!env.value("success", false)) {
        return {status_for(env["data"]["error"].value("code", "")), envelope_error(env)};
    }
    return {200, env["data"]};
}

Gateway::Reply Gateway::list_providers()
{
    json list = json::array({{{"name", "scripted"}, {"available", true}, {"models", json::array()}}});
    json models = json::array();
    if (!config_.adapter.model.empty()) {
        models.push_back(config_.adapter.model);
    }
    list.push_back({{"name", "http"}, {"available", !config_.adapter.endpoint.empty()}, {"models", models}});
    return {200, {{"providers", list}}};
}

Gateway::Reply Gateway::session_tool(const std::string& id, const std::string& tool, const json& args)
{
    std::unique_lock lease(engine_lease_, std::defer_lock);
    if (!lease.try_lock_for(config_.busy_wait)) {
        return {409, error_body("EngineBusy", "another request holds the engine", "retry shortly")};
    }
    const auto s = load_session(id);
    if (!s) {
        return {404, error_body("NotFound", fmt::format("no session '{}'", id), "GET /api/sessions lists them")};
    }
    if (auto failed = activate(*s)) {
        return {status_for((*failed)["data"]["error"].value("code", "")), envelope_error(*failed)};
    }
    const auto env = call(tool, args);
    if (!env.value("success", false)) {
        return {status_for(env["data"]["error"].value("code", "")), envelope_error(env)};
    }
    return {200, env["data"]};
}

Gateway::Reply Gateway::session_qsts(const std::string& id)
{
    return session_tool(id, "get_qsts_summary", json::object());
}

Gateway::Reply Gateway::session_export(const std::string& id, const std::string& format)
{
    return session_tool(id, "export_results", {{"format", format}});
}

void Gateway::mount(httplib::Server& server)
{
    const auto token = "Bearer " + config_.token;
    server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
        if (req.path.rfind("/api/", 0) != 0 || req.path == "/api/health") {
            return httplib::Server::HandlerResponse::Unhandled;
        }
        if (req.get_header_value("Authorization") != token) {
            res.status = 401;
            res.set_content(error_body("Unauthorized", "missing or wrong bearer token",
                                       "send 'Authorization: Bearer <token>'")
                                .dump(),
                            "application/json");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    auto send = [](httplib::Response& res, const Reply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    // Parses the body; replies 400 and returns nullopt when it is not JSON.
    auto parse = [](const httplib::Request& req, httplib::Response& res) -> std::optional<json> {
        if (req.body.empty()) {
            return json::object();
        }
        auto j = json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            res.status = 400;
            res.set_content(error_body("ParseError", "request body is not a JSON object").dump(), "application/json");
            return std::nullopt;
        }
        return j;
    };
    // Route handlers must not leak exceptions into httplib.
    auto guarded = [send](auto fn) {
        return [send, fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const Error& e) {
                send(res, {status_for(std::string(to_string(e.code()))),
                           error_body(std::string(to_string(e.code())), e.what())});
            } catch (const std::exception& e) {
                send(res, {500, error_body("InternalError", e.what())});
            }
        };
    };

    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"status", "ok"}}.dump(), "application/json");
    });
    server.Get("/api/sessions", guarded([this, send](const auto&, auto& res) { send(res, list_sessions()); }));
    server.Post("/api/sessions", guarded([this, send, parse](const auto& req, auto& res) {
                    if (auto body = parse(req, res)) {
                        send(res, create_session(*body));
                    }
                }));
    const std::string sid = R"(([A-Za-z0-9][A-Za-z0-9_.\-]*))";
    server.Get("/api/sessions/" + sid,
               guarded([this, send](const auto& req, auto& res) { send(res, get_session(req.matches[1])); }));
    server.Post("/api/sessions/" + sid + "/messages", guarded([this, send, parse](const auto& req, auto& res) {
                    if (auto body = parse(req, res)) {
                        send(res, post_message(req.matches[1], *body));
                    }
                }));
    server.Get("/api/sessions/" + sid + "/qsts",
               guarded([this, send](const auto& req, auto& res) { send(res, session_qsts(req.matches[1])); }));
    server.Get("/api/sessions/" + sid + "/topology", guarded([this, send](const auto& req, auto& res) {
                   send(res, session_tool(req.matches[1], "get_topology", json::object()));
               }));
    server.Get("/api/sessions/" + sid + "/export", guarded([this, send](const auto& req, auto& res) {
                   const auto format = req.has_param("format") ? req.get_param_value("format") : "csv";
                   const auto r = session_export(req.matches[1], format);
                   if (r.status != 200) {
                       send(res, r);
                       return;
                   }
                   res.set_content(r.body.value("content", ""), format == "csv" ? "text/csv" : "application/json");
               }));
    server.Post("/api/circuits", guarded([this, send, parse](const auto& req, auto& res) {
                    if (auto body = parse(req, res)) {
                        send(res, upload_circuit(*body));
                    }
                }));
    server.Get("/api/circuits", guarded([this, send](const auto&, auto& res) { send(res, list_circuits()); }));
    server.Get("/api/profiles", guarded([this, send](const auto&, auto& res) { send(res, list_profiles()); }));
    server.Get("/api/providers", guarded([this, send](const auto&, auto& res) { send(res, list_providers()); }));
}

} // namespace gridmcp::gateway
