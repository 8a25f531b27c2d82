#pragma once

#include <json.hpp>

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gridmcp::agent {

struct ToolCall {
    std::string id;
    std::string tool;
    nlohmann::json args = nlohmann::json::object();
};

enum class Role { User, Assistant, Tool };
std::string_view to_string(Role r) noexcept;
Role role_from_string(std::string_view s);

struct ChatTurn {
    Role role = Role::User;
    std::string text;
    std::vector<ToolCall> tool_calls;          // assistant turns only
    std::optional<nlohmann::json> tool_result; // tool turns: the full envelope
    std::string tool_call_id;                  // tool turns: which call this answers
};

nlohmann::json to_json(const ChatTurn& t);
ChatTurn turn_from_json(const nlohmann::json& j);

/// What an adapter sees. Tool results larger than the loop's limit arrive
/// summarized; the full envelopes stay in the trace.
struct AdapterRequest {
    nlohmann::json tools = nlohmann::json::array(); // MCP tool descriptors
    std::vector<ChatTurn> history;
    std::string system_prompt;
};

/// Either a final text reply (no calls) or a list of tool calls.
struct AdapterOutput {
    std::string text;
    std::vector<ToolCall> tool_calls;
    bool is_final() const { return tool_calls.empty(); }
};

/// Adapters never touch the engine; they only map a request to an output.
/// Throw Error(AdapterUnavailable) when the backend cannot be reached.
class Adapter {
public:
    virtual ~Adapter() = default;
    virtual AdapterOutput next(const AdapterRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Replays a transcript: a JSON array whose items are either a string (final
/// text), {"text": ...} or {"tool_calls": [{"tool": ..., "args": {...}}]}.
/// Text may cite envelope fields as {{tool/json/pointer}}, resolved against
/// the latest envelope of that tool in the history.
class ScriptedAdapter : public Adapter {
public:
    static constexpr const char* kTerminalText = "Script complete.";

    explicit ScriptedAdapter(nlohmann::json transcript);

    AdapterOutput next(const AdapterRequest& request) override;
    std::string name() const override { return "scripted"; }

    /// Throws InvalidArgument on a malformed transcript.
    static void check_transcript(const nlohmann::json& transcript);

private:
    nlohmann::json transcript_;
    std::size_t cursor_ = 0;
};

/// Replaces {{tool/pointer}} with the value at /pointer of the newest
/// envelope from `tool` in `history`. Unresolvable references are left as is.
std::string resolve_placeholders(const std::string& text, const std::vector<ChatTurn>& history);

struct HttpAdapterConfig {
    std::string endpoint; // http://host:port[/base]; requests go to <base>/v1/chat/completions
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{60000};
};

/// Generic chat-completions client with function calling.
class HttpChatAdapter : public Adapter {
public:
    explicit HttpChatAdapter(HttpAdapterConfig config);

    AdapterOutput next(const AdapterRequest& request) override;
    std::string name() const override { return "http:" + config_.model; }

    nlohmann::json build_request(const AdapterRequest& request) const;
    /// Unparseable function calls come back as text (MalformedModelOutput is
    /// noted in the text, not thrown).
    static AdapterOutput parse_response(const nlohmann::json& response);

private:
    HttpAdapterConfig config_;
};

using ToolDispatch = std::function<nlohmann::json(const std::string& tool, const nlohmann::json& args)>;

struct LoopConfig {
    std::size_t max_rounds = 8;
    std::size_t retries_per_rejection = 1;
    std::size_t summarize_over_bytes = 16 * 1024;
};

struct TraceEntry {
    std::size_t round = 0;
    std::string call_id;
    std::string tool;
    nlohmann::json args;
    nlohmann::json envelope; // full, never summarized
    bool rejected = false;   // schema violation
    bool retry = false;      // follows a rejection of the same tool
    bool summarized = false; // adapter saw a summary
};

enum class LoopStatus { Completed, MaxRoundsExceeded, AdapterUnavailable, RetryExhausted };
std::string_view to_string(LoopStatus s) noexcept;

struct LoopResult {
    LoopStatus status = LoopStatus::Completed;
    std::string final_text;
    std::vector<TraceEntry> trace;
    std::size_t rounds = 0;
    std::size_t retries = 0;
    std::optional<std::string> error_code;
    std::optional<std::string> error_message;
};

nlohmann::json to_json(const TraceEntry& e);
TraceEntry trace_entry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LoopResult& r);

/// Shrinks an envelope below `limit` bytes: long arrays and objects are cut
/// and marked with their original size. Small envelopes come back unchanged.
nlohmann::json summarize_envelope(const nlohmann::json& envelope, std::size_t limit);

/// Appends the user turn, then alternates adapter rounds and tool dispatch
/// until a final text, max_rounds, an adapter failure or a second rejection
/// of the same tool. `history` receives every turn, including partial ones.
LoopResult tool_use_loop(Adapter& adapter, const ToolDispatch& dispatch, std::vector<ChatTurn>& history,
                         const std::string& user_text, const std::string& system_prompt,
                         const nlohmann::json& tools, const LoopConfig& config = {});

} // namespace gridmcp::agent
