// Command-line front end: servers, one-shot studies and scripted chats.

#include "gridmcp/agent/agent.hpp"
#include "gridmcp/error.hpp"
#include "gridmcp/gateway/gateway.hpp"
#include "gridmcp/mcp/engine.hpp"
#include "gridmcp/mcp/rpc.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

using namespace gridmcp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kEngine = 3;
constexpr int kAdapter = 4;

int exit_code_for(const std::string& code)
{
    static const std::set<std::string> validation = {
        "SchemaViolation", "InvalidArgument", "UnknownTool",      "UnknownSkill",      "UnknownFormat",
        "UnknownShape",    "UnknownBus",      "UnknownLoad",      "UnknownDevice",     "UnknownResource",
        "PathEscapesWhitelist", "NotFound",   "SyntaxError",      "ParseError",        "UnresolvedRedirect",
        "UndefinedLineCode", "NonRadialCircuit", "LimitsInverted", "TapOutOfRange",    "DuplicateName",
        "MalformedRow",    "NonFiniteValue",  "DuplicateDeviceId", "BuiltinImmutable", "ShapeInUse"};
    if (code == "AdapterUnavailable" || code == "MalformedModelOutput" || code == "MaxRoundsExceeded") {
        return kAdapter;
    }
    return validation.count(code) ? kValidation : kEngine;
}

struct Options {
    std::string library;
    bool json_out = false;
    bool strict = false;
};

/// Failure while running a command; carries the exit code.
struct CommandFailed {
    int code;
    std::string message;
};

class Session {
public:
    Session(const Options& opt, const std::vector<fs::path>& extra_roots)
        : opt_(opt), engine_(mcp::EngineConfig{opt.library, extra_roots, 64})
    {
    }

    /// Calls a tool; prints the envelope in --json mode. A failure throws
    /// when `required` or --strict is set.
    json call(const std::string& tool, const json& args, bool required = true)
    {
        auto env = engine_.call_json(tool, args);
        if (opt_.json_out) {
            std::cout << env.dump() << '\n';
        }
        if (!env.value("success", false) && (required || opt_.strict)) {
            const auto& err = env["data"]["error"];
            throw CommandFailed{exit_code_for(err.value("code", "")),
                                fmt::format("{} failed: {}: {}{}", tool, err.value("code", ""), err.value("message", ""),
                                            env.contains("hint") && env["hint"].is_string()
                                                ? "\nhint: " + env["hint"].get<std::string>()
                                                : "")};
        }
        return env;
    }

    mcp::Engine& engine() { return engine_; }

private:
    const Options& opt_;
    mcp::Engine engine_;
};

/// A package argument is a library circuit name or a filesystem path. Paths
/// are admitted by adding their parent directory as an allowed root.
struct PackageRef {
    std::string tool;
    json args;
    std::vector<fs::path> roots;
};

PackageRef package_ref(const std::string& arg)
{
    std::error_code ec;
    if (arg.find('/') != std::string::npos || fs::exists(arg, ec)) {
        const auto p = fs::weakly_canonical(fs::absolute(arg), ec);
        const auto dir = fs::is_directory(p, ec) ? p : p.parent_path();
        return {"load_circuit", {{"path", p.string()}}, {dir.parent_path()}};
    }
    return {"load_library_circuit", {{"name", arg}}, {}};
}

std::string fmt_pu(const json& v)
{
    return v.is_number() ? fmt::format("{:.6f}", v.get<double>()) : "-";
}

void print_voltage_table(const json& data)
{
    fmt::print("{:<12} {:>10} {:>10} {:>10} {:>10}\n", "bus", "pos_seq", "a", "b", "c");
    for (const auto& [bus, v] : data["voltages"].items()) {
        auto phase = [&](const char* p) {
            return v["phases"].contains(p) ? fmt_pu(v["phases"][p]["magnitude_pu"]) : std::string("-");
        };
        fmt::print("{:<12} {:>10} {:>10} {:>10} {:>10}\n", bus, fmt_pu(v["per_unit"]), phase("a"), phase("b"),
                   phase("c"));
    }
}

void print_qsts_summary(const json& data)
{
    const auto& s = data["summary"];
    fmt::print("steps: {}\n", data.value("steps", 0));
    fmt::print("min voltage: {} p.u. at {} (step {})\n", fmt_pu(s["min_voltage"]["per_unit"]),
               s["min_voltage"].value("bus", "-"), s["min_voltage"].value("step", 0));
    fmt::print("max voltage: {} p.u. at {} (step {})\n", fmt_pu(s["max_voltage"]["per_unit"]),
               s["max_voltage"].value("bus", "-"), s["max_voltage"].value("step", 0));
    fmt::print("violation steps: {}\n", s.value("violation_step_count", 0));
    fmt::print("violations: {}\n", s.value("violation_count", 0));
    fmt::print("energy loss: {} kWh\n", s["energy_loss_kwh"].dump());
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CommandFailed{kValidation, fmt::format("cannot read '{}'", path)};
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void load_package(Session& s, const PackageRef& ref)
{
    s.call(ref.tool, ref.args);
}

/// Loads the package, optionally attaches a profile to every load and runs QSTS.
json run_qsts(Session& s, const PackageRef& ref, std::size_t steps, const std::string& profile)
{
    load_package(s, ref);
    if (!profile.empty()) {
        s.call("assign_loadshape", {{"load", "*"}, {"shape", profile}});
    }
    return s.call("run_qsts", {{"steps", steps}});
}

int cmd_solve(const Options& opt, const std::string& package)
{
    const auto ref = package_ref(package);
    Session s(opt, ref.roots);
    load_package(s, ref);
    const auto solved = s.call("solve_power_flow", json::object());
    const auto all = s.call("get_all_bus_voltages", json::object());
    if (!opt.json_out) {
        const auto& d = solved["data"];
        fmt::print("converged in {} iterations\n", d["iterations"].dump());
        print_voltage_table(all["data"]);
        fmt::print("violations: {}\n", d["violation_count"].dump());
        fmt::print("losses: {} kW, {} kvar\n", all["data"]["losses"]["kw"].dump(), all["data"]["losses"]["kvar"].dump());
    }
    return kOk;
}

int cmd_qsts(const Options& opt, const std::string& package, std::size_t steps, const std::string& profile)
{
    const auto ref = package_ref(package);
    Session s(opt, ref.roots);
    const auto env = run_qsts(s, ref, steps, profile);
    if (!opt.json_out) {
        print_qsts_summary(env["data"]);
    }
    return kOk;
}

int cmd_export(const Options& opt, const std::string& package, std::size_t steps, const std::string& profile,
               const std::string& format, const std::string& out)
{
    const auto ref = package_ref(package);
    Session s(opt, ref.roots);
    run_qsts(s, ref, steps, profile);
    const auto env = s.call("export_results", {{"format", format}});
    if (opt.json_out) {
        return kOk;
    }
    const auto content = env["data"]["content"].get<std::string>();
    if (out.empty()) {
        std::cout << content;
    } else {
        std::ofstream(out, std::ios::binary) << content;
        fmt::print("wrote {} bytes to {}\n", content.size(), out);
    }
    return kOk;
}

int cmd_skill(const Options& opt, const std::string& name, const std::string& package, std::optional<std::uint64_t> seed,
              const std::string& config_text, std::optional<double> load_scale)
{
    const auto ref = package_ref(package);
    Session s(opt, ref.roots);
    load_package(s, ref);
    if (load_scale) {
        s.call("edit_load", {{"load", "*"}, {"multiplier", *load_scale}});
    }
    json config = json::object();
    if (!config_text.empty()) {
        config = json::parse(config_text, nullptr, false);
        if (config.is_discarded() || !config.is_object()) {
            throw CommandFailed{kValidation, "--config must be a JSON object"};
        }
    }
    if (seed) {
        config["seed"] = *seed;
    }
    const auto env = s.call("invoke_skill", {{"skill", name}, {"config", config}});
    if (!opt.json_out) {
        std::cout << env["data"].dump(2) << '\n';
    }
    return kOk;
}

int cmd_chat(const Options& opt, const std::string& script_path, const std::string& package, const std::string& text)
{
    const auto transcript = json::parse(read_file(script_path), nullptr, false);
    if (transcript.is_discarded()) {
        throw CommandFailed{kValidation, fmt::format("'{}' is not JSON", script_path)};
    }
    try {
        agent::ScriptedAdapter::check_transcript(transcript);
    } catch (const Error& e) {
        throw CommandFailed{kValidation, e.what()};
    }
    std::optional<PackageRef> ref;
    if (!package.empty()) {
        ref = package_ref(package);
    }
    Session s(opt, ref ? ref->roots : std::vector<fs::path>{});
    std::optional<std::string> circuit;
    if (ref) {
        load_package(s, *ref);
        circuit = s.engine().circuit_name();
    }
    json tools = json::array();
    for (const auto& t : mcp::tool_catalog()) {
        tools.push_back({{"name", t.name}, {"description", t.description}, {"inputSchema", t.input_schema}});
    }
    agent::ScriptedAdapter adapter(transcript);
    std::vector<agent::ChatTurn> history;
    agent::ToolDispatch dispatch = [&](const std::string& tool, const json& args) {
        return s.engine().call_json(tool, args);
    };
    const auto result =
        agent::tool_use_loop(adapter, dispatch, history, text, s.engine().system_prompt(circuit), tools);

    std::optional<std::string> first_failure;
    for (const auto& e : result.trace) {
        const bool ok = e.envelope.value("success", false);
        if (!ok && !first_failure) {
            first_failure = e.envelope["data"]["error"].value("code", "");
        }
        if (opt.json_out) {
            std::cout << e.envelope.dump() << '\n';
        } else {
            fmt::print("[{}] {} {} -> {}\n", e.round, e.tool, e.args.dump(),
                       ok ? std::string("ok") : e.envelope["data"]["error"].value("code", "failed"));
        }
    }
    (opt.json_out ? std::cerr : std::cout) << result.final_text << '\n';
    if (result.status != agent::LoopStatus::Completed) {
        std::cerr << "chat stopped: " << agent::to_string(result.status) << '\n';
        return kAdapter;
    }
    if (opt.strict && first_failure) {
        std::cerr << "a tool call failed: " << *first_failure << '\n';
        return exit_code_for(*first_failure);
    }
    return kOk;
}

int cmd_serve_mcp(const Options& opt, int port, const std::string& host)
{
    mcp::Engine engine(mcp::EngineConfig{opt.library, {}, 64});
    if (port == 0) {
        mcp::serve_stdio(engine, std::cin, std::cout);
        return kOk;
    }
    httplib::Server server;
    mcp::HttpTransport transport(engine, server);
    std::cerr << fmt::format("MCP over HTTP on http://{}:{}/mcp\n", host, port);
    return server.listen(host, port) ? kOk : kEngine;
}

int cmd_serve_gateway(const Options& opt, const std::string& config_file, int port, const std::string& host)
{
    std::optional<fs::path> file;
    if (!config_file.empty()) {
        file = config_file;
    }
    auto config = gateway::load_gateway_config(file);
    if (config.library_root.empty()) {
        config.library_root = opt.library;
    }
    gateway::Gateway gw(config);
    for (const auto& w : gw.store().warnings()) {
        std::cerr << "warning: " << w << '\n';
    }
    httplib::Server server;
    gw.mount(server);
    mcp::HttpTransport transport(gw.engine(), server);
    if (port == 0) {
        port = server.bind_to_any_port(host);
    } else if (!server.bind_to_port(host, port)) {
        std::cerr << fmt::format("cannot bind {}:{}\n", host, port);
        return kEngine;
    }
    std::cout << fmt::format("listening on http://{}:{}", host, port) << std::endl;
    return server.listen_after_bind() ? kOk : kEngine;
}

std::string default_library()
{
    if (const char* v = std::getenv("GRIDMCP_LIBRARY_ROOT"); v != nullptr && *v != '\0') {
        return v;
    }
    return GRIDMCP_DEFAULT_LIBRARY;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Distribution power-flow engine with an MCP server, REST gateway and scripted agent"};
    app.require_subcommand(1);
    Options opt;
    opt.library = default_library();
    app.add_option("--library", opt.library, "Circuit library directory")->capture_default_str();
    app.add_flag("--json", opt.json_out, "Print raw tool envelopes, one per line");
    app.add_flag("--strict", opt.strict, "Exit nonzero on any failure envelope");

    std::string package;
    std::size_t steps = 24;
    std::string profile;
    std::string format = "csv";
    std::string out;
    std::string skill;
    std::optional<std::uint64_t> seed;
    std::string skill_config;
    std::optional<double> load_scale;
    std::string script;
    std::string text = "Run the scripted study.";
    std::string host = "127.0.0.1";
    int port = 0;
    std::string config_file;

    auto* solve = app.add_subcommand("solve", "Solve the power flow and print bus voltages");
    solve->add_option("package", package, "Library circuit name or package path")->required();

    auto* qsts = app.add_subcommand("qsts", "Run a time series and print its summary");
    qsts->add_option("package", package, "Library circuit name or package path")->required();
    qsts->add_option("--steps", steps, "Number of steps")->capture_default_str();
    qsts->add_option("--profile", profile, "Shape attached to every load first");

    auto* exp = app.add_subcommand("export", "Run a time series and export the result");
    exp->add_option("package", package, "Library circuit name or package path")->required();
    exp->add_option("--format", format, "csv or json")->capture_default_str();
    exp->add_option("--steps", steps, "Number of steps")->capture_default_str();
    exp->add_option("--profile", profile, "Shape attached to every load first");
    exp->add_option("-o,--output", out, "Write to a file instead of stdout");

    auto* sk = app.add_subcommand("skill", "Run a skill and print its report");
    sk->add_option("name", skill, "Skill name")->required();
    sk->add_option("package", package, "Library circuit name or package path")->required();
    sk->add_option("--seed", seed, "Random seed");
    sk->add_option("--config", skill_config, "Skill configuration as a JSON object");
    sk->add_option("--load-scale", load_scale, "Multiply every load before the skill runs");

    auto* chat = app.add_subcommand("chat", "Replay a scripted transcript through the tool-use loop");
    chat->add_option("--script", script, "Transcript file (JSON array of adapter outputs)")->required();
    chat->add_option("--circuit", package, "Circuit to load before the chat");
    chat->add_option("--text", text, "User message")->capture_default_str();

    auto* smcp = app.add_subcommand("serve-mcp", "Serve MCP over stdio, or over HTTP with --port");
    smcp->add_option("--port", port, "HTTP port (0: stdio)");
    smcp->add_option("--host", host, "HTTP bind address")->capture_default_str();

    auto* sgw = app.add_subcommand("serve-gateway", "Serve the REST gateway (and MCP at /mcp)");
    sgw->add_option("--config", config_file, "Gateway config file");
    sgw->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
    sgw->add_option("--host", host, "Bind address")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        if (*solve) {
            return cmd_solve(opt, package);
        }
        if (*qsts) {
            return cmd_qsts(opt, package, steps, profile);
        }
        if (*exp) {
            return cmd_export(opt, package, steps, profile, format, out);
        }
        if (*sk) {
            return cmd_skill(opt, skill, package, seed, skill_config, load_scale);
        }
        if (*chat) {
            return cmd_chat(opt, script, package, text);
        }
        if (*smcp) {
            return cmd_serve_mcp(opt, port, host);
        }
        if (*sgw) {
            return cmd_serve_gateway(opt, config_file, port, host);
        }
    } catch (const CommandFailed& f) {
        std::cerr << "error: " << f.message << '\n';
        return f.code;
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
        return exit_code_for(std::string(to_string(e.code())));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kEngine;
    }
    return kValidation;
}
