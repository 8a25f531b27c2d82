#include "gridmcp/agent/agent.hpp"

#include "gridmcp/error.hpp"
#include "gridmcp/mcp/envelope.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <map>

namespace gridmcp::agent {

using nlohmann::json;

std::string_view to_string(Role r) noexcept
{
    switch (r) {
    case Role::User:
        return "user";
    case Role::Assistant:
        return "assistant";
    case Role::Tool:
        return "tool";
    }
    return "user";
}

Role role_from_string(std::string_view s)
{
    if (s == "user") {
        return Role::User;
    }
    if (s == "assistant") {
        return Role::Assistant;
    }
    if (s == "tool") {
        return Role::Tool;
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown chat role '{}'", s));
}

std::string_view to_string(LoopStatus s) noexcept
{
    switch (s) {
    case LoopStatus::Completed:
        return "completed";
    case LoopStatus::MaxRoundsExceeded:
        return "max_rounds_exceeded";
    case LoopStatus::AdapterUnavailable:
        return "adapter_unavailable";
    case LoopStatus::RetryExhausted:
        return "retry_exhausted";
    }
    return "completed";
}

namespace {

json call_json(const ToolCall& c) { return {{"id", c.id}, {"tool", c.tool}, {"args", c.args}}; }

ToolCall call_from_json(const json& j)
{
    ToolCall c;
    c.id = j.value("id", "");
    c.tool = j.at("tool").get<std::string>();
    c.args = j.value("args", json::object());
    return c;
}

} // namespace

json to_json(const ChatTurn& t)
{
    json j = {{"role", to_string(t.role)}, {"text", t.text}};
    if (!t.tool_calls.empty()) {
        json calls = json::array();
        for (const auto& c : t.tool_calls) {
            calls.push_back(call_json(c));
        }
        j["tool_calls"] = std::move(calls);
    }
    if (t.tool_result) {
        j["tool_result"] = *t.tool_result;
        j["tool_call_id"] = t.tool_call_id;
    }
    return j;
}

ChatTurn turn_from_json(const json& j)
{
    ChatTurn t;
    t.role = role_from_string(j.at("role").get<std::string>());
    t.text = j.value("text", "");
    if (j.contains("tool_calls")) {
        for (const auto& c : j["tool_calls"]) {
            t.tool_calls.push_back(call_from_json(c));
        }
    }
    if (j.contains("tool_result")) {
        t.tool_result = j["tool_result"];
        t.tool_call_id = j.value("tool_call_id", "");
    }
    if (t.role == Role::Tool && !t.tool_result) {
        throw Error(ErrorCode::InvalidArgument, "a tool turn needs a tool_result");
    }
    return t;
}

json to_json(const TraceEntry& e)
{
    return {{"round", e.round},   {"call_id", e.call_id},   {"tool", e.tool},
            {"args", e.args},     {"envelope", e.envelope}, {"rejected", e.rejected},
            {"retry", e.retry},   {"summarized", e.summarized}};
}

TraceEntry trace_entry_from_json(const json& j)
{
    TraceEntry e;
    e.round = j.at("round").get<std::size_t>();
    e.call_id = j.value("call_id", "");
    e.tool = j.at("tool").get<std::string>();
    e.args = j.value("args", json::object());
    e.envelope = j.at("envelope");
    e.rejected = j.value("rejected", false);
    e.retry = j.value("retry", false);
    e.summarized = j.value("summarized", false);
    return e;
}

json to_json(const LoopResult& r)
{
    json trace = json::array();
    for (const auto& e : r.trace) {
        trace.push_back(to_json(e));
    }
    json j = {{"status", to_string(r.status)}, {"final_text", r.final_text}, {"trace", std::move(trace)},
              {"rounds", r.rounds},            {"retries", r.retries}};
    if (r.error_code) {
        j["error"] = {{"code", *r.error_code}, {"message", r.error_message.value_or("")}};
    }
    return j;
}

// Scripted adapter

void ScriptedAdapter::check_transcript(const json& transcript)
{
    if (!transcript.is_array()) {
        throw Error(ErrorCode::InvalidArgument, "a transcript is a JSON array of adapter outputs");
    }
    for (std::size_t i = 0; i < transcript.size(); ++i) {
        const auto& item = transcript[i];
        if (item.is_string()) {
            continue;
        }
        if (!item.is_object()) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("transcript item {} is neither text nor an object", i));
        }
        if (item.contains("tool_calls")) {
            if (!item["tool_calls"].is_array() || item["tool_calls"].empty()) {
                throw Error(ErrorCode::InvalidArgument, fmt::format("transcript item {}: tool_calls must be a non-empty array", i));
            }
            for (const auto& c : item["tool_calls"]) {
                if (!c.is_object() || !c.contains("tool") || !c["tool"].is_string()) {
                    throw Error(ErrorCode::InvalidArgument, fmt::format("transcript item {}: each call needs a tool name", i));
                }
            }
        } else if (!item.contains("text") || !item["text"].is_string()) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("transcript item {} has neither text nor tool_calls", i));
        }
    }
}

ScriptedAdapter::ScriptedAdapter(json transcript) : transcript_(std::move(transcript))
{
    check_transcript(transcript_);
}

AdapterOutput ScriptedAdapter::next(const AdapterRequest& request)
{
    AdapterOutput out;
    if (cursor_ >= transcript_.size()) {
        out.text = kTerminalText;
        return out;
    }
    const auto& item = transcript_[cursor_++];
    if (item.is_string()) {
        out.text = resolve_placeholders(item.get<std::string>(), request.history);
        return out;
    }
    out.text = resolve_placeholders(item.value("text", ""), request.history);
    if (item.contains("tool_calls")) {
        for (const auto& c : item["tool_calls"]) {
            out.tool_calls.push_back({c.value("id", ""), c["tool"].get<std::string>(),
                                      c.value("args", json::object())});
        }
    }
    return out;
}

std::string resolve_placeholders(const std::string& text, const std::vector<ChatTurn>& history)
{
    std::map<std::string, const json*> latest; // tool -> newest envelope
    for (const auto& t : history) {
        if (t.role == Role::Tool && t.tool_result && t.tool_result->contains("tool")) {
            latest[(*t.tool_result)["tool"].get<std::string>()] = &*t.tool_result;
        }
    }
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find("{{", pos);
        if (open == std::string::npos) {
            break;
        }
        const auto close = text.find("}}", open + 2);
        if (close == std::string::npos) {
            break;
        }
        out.append(text, pos, open - pos);
        const auto ref = text.substr(open + 2, close - open - 2);
        const auto slash = ref.find('/');
        std::string replacement = text.substr(open, close + 2 - open);
        if (slash != std::string::npos) {
            const auto it = latest.find(ref.substr(0, slash));
            if (it != latest.end()) {
                try {
                    const json::json_pointer ptr(ref.substr(slash));
                    if (it->second->contains(ptr)) {
                        const auto& v = it->second->at(ptr);
                        replacement = v.is_string() ? v.get<std::string>() : v.dump();
                    }
                } catch (const json::exception&) {
                }
            }
        }
        out += replacement;
        pos = close + 2;
    }
    out.append(text, pos, std::string::npos);
    return out;
}

// HTTP adapter

namespace {

struct Endpoint {
    std::string origin; // scheme://host:port
    std::string base;   // path prefix without trailing slash
};

Endpoint parse_endpoint(const std::string& url)
{
    if (url.rfind("https://", 0) == 0) {
        throw Error(ErrorCode::AdapterUnavailable, "https endpoints are not supported by this build; use a local http proxy");
    }
    if (url.rfind("http://", 0) != 0) {
        throw Error(ErrorCode::AdapterUnavailable, fmt::format("endpoint '{}' must start with http://", url));
    }
    const auto slash = url.find('/', 7);
    Endpoint e;
    e.origin = slash == std::string::npos ? url : url.substr(0, slash);
    e.base = slash == std::string::npos ? "" : url.substr(slash);
    while (!e.base.empty() && e.base.back() == '/') {
        e.base.pop_back();
    }
    return e;
}

} // namespace

HttpChatAdapter::HttpChatAdapter(HttpAdapterConfig config) : config_(std::move(config)) {}

json HttpChatAdapter::build_request(const AdapterRequest& request) const
{
    json messages = json::array();
    if (!request.system_prompt.empty()) {
        messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    }
    for (const auto& t : request.history) {
        switch (t.role) {
        case Role::User:
            messages.push_back({{"role", "user"}, {"content", t.text}});
            break;
        case Role::Assistant: {
            json m = {{"role", "assistant"}, {"content", t.text.empty() ? json(nullptr) : json(t.text)}};
            if (!t.tool_calls.empty()) {
                json calls = json::array();
                for (const auto& c : t.tool_calls) {
                    calls.push_back({{"id", c.id},
                                     {"type", "function"},
                                     {"function", {{"name", c.tool}, {"arguments", c.args.dump()}}}});
                }
                m["tool_calls"] = std::move(calls);
            }
            messages.push_back(std::move(m));
            break;
        }
        case Role::Tool:
            messages.push_back({{"role", "tool"},
                                {"tool_call_id", t.tool_call_id},
                                {"content", t.tool_result ? t.tool_result->dump() : std::string()}});
            break;
        }
    }
    json tools = json::array();
    for (const auto& d : request.tools) {
        tools.push_back({{"type", "function"},
                         {"function",
                          {{"name", d.at("name")},
                           {"description", d.value("description", "")},
                           {"parameters", d.value("inputSchema", json::object())}}}});
    }
    json body = {{"model", config_.model}, {"messages", std::move(messages)}};
    if (!tools.empty()) {
        body["tools"] = std::move(tools);
        body["tool_choice"] = "auto";
    }
    return body;
}

AdapterOutput HttpChatAdapter::parse_response(const json& response)
{
    AdapterOutput out;
    const json* message = nullptr;
    if (response.is_object() && response.contains("choices") && response["choices"].is_array()
        && !response["choices"].empty() && response["choices"][0].is_object()
        && response["choices"][0].contains("message") && response["choices"][0]["message"].is_object()) {
        message = &response["choices"][0]["message"];
    }
    if (message == nullptr) {
        out.text = fmt::format("[{}] the model response has no choices[0].message",
                               to_string(ErrorCode::MalformedModelOutput));
        return out;
    }
    if (message->contains("content") && (*message)["content"].is_string()) {
        out.text = (*message)["content"].get<std::string>();
    }
    if (!message->contains("tool_calls") || !(*message)["tool_calls"].is_array()) {
        return out;
    }
    std::vector<ToolCall> calls;
    for (const auto& c : (*message)["tool_calls"]) {
        const json fn = c.is_object() ? c.value("function", json::object()) : json::object();
        const auto name = fn.is_object() ? fn.value("name", "") : std::string();
        json args;
        if (fn.is_object() && fn.contains("arguments")) {
            const auto& raw = fn["arguments"];
            if (raw.is_string()) {
                args = json::parse(raw.get<std::string>(), nullptr, false);
            } else {
                args = raw;
            }
        } else {
            args = json::object();
        }
        if (name.empty() || !args.is_object()) {
            out.tool_calls.clear();
            out.text += fmt::format("{}[{}] could not parse the function call{}", out.text.empty() ? "" : "\n",
                                    to_string(ErrorCode::MalformedModelOutput),
                                    name.empty() ? std::string() : " to " + name);
            return out;
        }
        calls.push_back({c.value("id", ""), name, std::move(args)});
    }
    out.tool_calls = std::move(calls);
    return out;
}

AdapterOutput HttpChatAdapter::next(const AdapterRequest& request)
{
    const auto endpoint = parse_endpoint(config_.endpoint);
    httplib::Client client(endpoint.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    const auto res = client.Post(endpoint.base + "/v1/chat/completions", headers, build_request(request).dump(),
                                 "application/json");
    if (!res) {
        throw Error(ErrorCode::AdapterUnavailable,
                    fmt::format("{}: {}", endpoint.origin, httplib::to_string(res.error())));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::AdapterUnavailable, fmt::format("{} answered HTTP {}", endpoint.origin, res->status));
    }
    const auto body = json::parse(res->body, nullptr, false);
    if (body.is_discarded()) {
        AdapterOutput out;
        out.text = fmt::format("[{}] the model response is not JSON", to_string(ErrorCode::MalformedModelOutput));
        return out;
    }
    return parse_response(body);
}

// Loop

namespace {

json shrink(const json& j, std::size_t keep)
{
    if (j.is_array()) {
        json out = json::array();
        for (std::size_t i = 0; i < j.size() && i < keep; ++i) {
            out.push_back(shrink(j[i], keep));
        }
        if (j.size() > keep) {
            out.push_back({{"_omitted_items", j.size() - keep}});
        }
        return out;
    }
    if (j.is_object()) {
        json out = json::object();
        std::size_t n = 0;
        for (const auto& [k, v] : j.items()) {
            if (n++ >= keep) {
                break;
            }
            out[k] = shrink(v, keep);
        }
        if (j.size() > keep) {
            out["_omitted_keys"] = j.size() - keep;
        }
        return out;
    }
    if (j.is_string() && j.get_ref<const std::string&>().size() > 32 * keep) {
        const auto& s = j.get_ref<const std::string&>();
        return s.substr(0, 32 * keep) + fmt::format("...[{} more bytes]", s.size() - 32 * keep);
    }
    return j;
}

} // namespace

json summarize_envelope(const json& envelope, std::size_t limit)
{
    const auto full = envelope.dump();
    if (full.size() <= limit) {
        return envelope;
    }
    const json marker = {{"original_bytes", full.size()}, {"note", "summarized; the full envelope is in the trace"}};
    for (std::size_t keep = 64; keep >= 1; keep /= 2) {
        json s = envelope;
        if (envelope.contains("data")) {
            s["data"] = shrink(envelope["data"], keep);
        }
        s["summary"] = marker;
        if (s.dump().size() <= limit) {
            return s;
        }
    }
    json s = {{"success", envelope.value("success", false)}, {"tool", envelope.value("tool", "")}, {"summary", marker}};
    if (envelope.contains("hint")) {
        s["hint"] = envelope["hint"];
    }
    json keys = json::array();
    if (envelope.contains("data") && envelope["data"].is_object()) {
        for (const auto& [k, v] : envelope["data"].items()) {
            keys.push_back(k);
        }
    }
    s["data_keys"] = std::move(keys);
    return s;
}

LoopResult tool_use_loop(Adapter& adapter, const ToolDispatch& dispatch, std::vector<ChatTurn>& history,
                         const std::string& user_text, const std::string& system_prompt, const json& tools,
                         const LoopConfig& config)
{
    LoopResult result;
    history.push_back({Role::User, user_text, {}, std::nullopt, {}});
    std::map<std::string, std::size_t> rejections; // tool -> consecutive schema rejections

    for (std::size_t round = 1; round <= config.max_rounds; ++round) {
        AdapterRequest request{tools, history, system_prompt};
        for (auto& t : request.history) {
            if (t.tool_result) {
                t.tool_result = summarize_envelope(*t.tool_result, config.summarize_over_bytes);
            }
        }
        AdapterOutput out;
        try {
            out = adapter.next(request);
        } catch (const Error& e) {
            result.status = LoopStatus::AdapterUnavailable;
            result.error_code = std::string(to_string(ErrorCode::AdapterUnavailable));
            result.error_message = e.what();
            result.rounds = round;
            return result;
        } catch (const std::exception& e) {
            result.status = LoopStatus::AdapterUnavailable;
            result.error_code = std::string(to_string(ErrorCode::AdapterUnavailable));
            result.error_message = fmt::format("{} adapter failed: {}", adapter.name(), e.what());
            result.rounds = round;
            return result;
        }
        result.rounds = round;
        if (out.is_final()) {
            history.push_back({Role::Assistant, out.text, {}, std::nullopt, {}});
            result.final_text = out.text;
            result.status = LoopStatus::Completed;
            return result;
        }
        for (std::size_t k = 0; k < out.tool_calls.size(); ++k) {
            if (out.tool_calls[k].id.empty()) {
                out.tool_calls[k].id = fmt::format("call_{}_{}", round, k + 1);
            }
        }
        history.push_back({Role::Assistant, out.text, out.tool_calls, std::nullopt, {}});

        std::optional<std::string> exhausted;
        std::string exhausted_hint;
        for (const auto& call : out.tool_calls) {
            json envelope;
            try {
                envelope = dispatch(call.tool, call.args);
            } catch (const Error& e) {
                envelope = mcp::to_json(mcp::ToolEnvelope::fail(
                    call.tool, e.code(), e.what(),
                    e.code() == ErrorCode::EngineBusy ? "the engine queue is full; retry shortly"
                                                      : fmt::format("{} could not be dispatched; retry it", call.tool)));
            }
            TraceEntry entry;
            entry.round = round;
            entry.call_id = call.id;
            entry.tool = call.tool;
            entry.args = call.args;
            entry.envelope = envelope;
            entry.summarized = envelope.dump().size() > config.summarize_over_bytes;
            entry.retry = rejections.count(call.tool) != 0;
            const bool rejected = !envelope.value("success", false) && envelope.contains("data")
                                  && envelope["data"].contains("error")
                                  && envelope["data"]["error"].value("code", "") == "SchemaViolation";
            entry.rejected = rejected;
            result.retries += entry.retry ? 1 : 0;
            if (rejected) {
                if (++rejections[call.tool] > config.retries_per_rejection && !exhausted) {
                    exhausted = call.tool;
                    exhausted_hint = envelope.value("hint", "");
                }
            } else {
                rejections.erase(call.tool);
            }
            result.trace.push_back(entry);
            history.push_back({Role::Tool, "", {}, envelope, call.id});
        }
        if (exhausted) {
            result.status = LoopStatus::RetryExhausted;
            result.error_code = "SchemaViolation";
            result.error_message = fmt::format("{} was rejected again after {} retry: {}", *exhausted,
                                               config.retries_per_rejection, exhausted_hint);
            result.final_text = fmt::format("Stopped: the call to {} was rejected after its retry. {}", *exhausted,
                                            exhausted_hint);
            history.push_back({Role::Assistant, result.final_text, {}, std::nullopt, {}});
            return result;
        }
    }
    result.status = LoopStatus::MaxRoundsExceeded;
    result.error_code = std::string(to_string(ErrorCode::MaxRoundsExceeded));
    result.error_message = fmt::format("no final reply after {} rounds", config.max_rounds);
    return result;
}

} // namespace gridmcp::agent
