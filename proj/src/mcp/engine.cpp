#include "engine_state.hpp"

#include "gridmcp/mcp/schema.hpp"

#include <fmt/format.h>

#include <chrono>

namespace gridmcp::mcp {

using nlohmann::json;

namespace {

constexpr const char* kResourceScheme = "circuit://";

json shunt_json(const std::vector<pf::ShuntBank>& banks)
{
    json out = json::array();
    for (const auto& b : banks) {
        out.push_back({b.id, b.bus, b.phases.bits(), b.kvar, b.enabled});
    }
    return out;
}

std::string phase_name(const pf::Circuit& c, const pf::RegulatorSpec& r)
{
    const auto* line = c.find_line(r.branch_ref);
    return line != nullptr ? line->phases.str() : "";
}

} // namespace

json circuit_to_json(const pf::Circuit& c)
{
    json buses = json::array();
    for (const auto& b : c.buses) {
        buses.push_back({b.id, b.phases.bits(), b.base_kv, b.coord ? json{b.coord->x, b.coord->y} : json(nullptr)});
    }
    json lines = json::array();
    for (const auto& l : c.lines) {
        json z = json::array();
        for (const auto& row : l.z_ohm.m) {
            for (const auto& v : row) {
                z.push_back(v.real());
                z.push_back(v.imag());
            }
        }
        lines.push_back({l.id, l.from_bus, l.to_bus, l.phases.bits(), z, l.shunt_b,
                         l.to_base_kv ? json(*l.to_base_kv) : json(nullptr)});
    }
    json loads = json::array();
    for (const auto& l : c.loads) {
        loads.push_back({l.id, l.bus, l.phases.bits(), l.connection == pf::Connection::Delta, l.kw, l.kvar,
                         l.shape_ref ? json(*l.shape_ref) : json(nullptr)});
    }
    json regs = json::array();
    for (const auto& r : c.regulators) {
        regs.push_back({r.id, r.branch_ref, r.taps, r.step_pu, phase_name(c, r)});
    }
    return {{"name", c.name},
            {"source", {c.source.bus, c.source.phases.bits(), c.source.pu, c.source.angle_deg, c.source.base_kv}},
            {"base_kva", c.base_kva},
            {"buses", buses},
            {"lines", lines},
            {"loads", loads},
            {"capacitors", shunt_json(c.capacitors)},
            {"reactors", shunt_json(c.reactors)},
            {"regulators", regs}};
}

Engine::Engine(EngineConfig config) : state_(std::make_unique<State>()), executor_(config.queue_capacity)
{
    state_->config = std::move(config);
    state_->dispatch = [this](const std::string& tool, const json& args) { return call_json(tool, args); };
}

Engine::~Engine() = default;

const EngineConfig& Engine::config() const { return state_->config; }

SerialExecutor& Engine::executor() { return executor_; }

void Engine::set_fault_injector(std::function<void(const std::string&)> injector)
{
    executor_.run([&] { state_->fault_injector = std::move(injector); });
}

ToolEnvelope Engine::call(const std::string& tool, const json& args)
{
    const auto start = std::chrono::steady_clock::now();
    auto body = [&]() -> ToolEnvelope {
        const auto* handler = find_handler(tool);
        if (handler == nullptr) {
            return ToolEnvelope::fail(tool, ErrorCode::UnknownTool, fmt::format("unknown tool '{}'", tool),
                                      fmt::format("'{}' is not a tool; call tools/list for the 36 available tools",
                                                  tool));
        }
        const auto& spec = *std::find_if(tool_catalog().begin(), tool_catalog().end(),
                                         [&](const ToolSpec& t) { return t.name == tool; });
        const json input = args.is_null() ? json::object() : args;
        auto checked = validate(spec.input_schema, input);
        if (!checked.ok) {
            const auto& issue = checked.issue;
            const std::string where = issue.path.empty() ? std::string("the arguments") : "'" + issue.path + "'";
            return ToolEnvelope::fail(
                tool, ErrorCode::SchemaViolation, fmt::format("{}: {}", tool, issue.message),
                fmt::format("fix {} (expected {}) and call {} again", where, issue.expected, tool),
                {{"path", issue.path}, {"expected", issue.expected}});
        }
        try {
            if (state_->fault_injector) {
                state_->fault_injector(tool);
            }
            return ToolEnvelope::ok(tool, (*handler)(*state_, checked.value));
        } catch (const ToolFailure& f) {
            return ToolEnvelope::fail(tool, f.code(), f.what(), f.hint, f.data);
        } catch (const Error& e) {
            return ToolEnvelope::fail(tool, e.code(), e.what(), default_hint(e.code(), tool));
        } catch (const std::exception& e) {
            return ToolEnvelope::fail(tool, ErrorCode::InvalidArgument, fmt::format("internal error in {}: {}", tool, e.what()),
                                      fmt::format("{} failed unexpectedly; check the circuit state and retry {}", tool,
                                                  tool));
        } catch (...) {
            return ToolEnvelope::fail(tool, ErrorCode::InvalidArgument, fmt::format("internal error in {}", tool),
                                      fmt::format("{} failed unexpectedly; retry {} or reload the circuit", tool, tool));
        }
    };
    // get_skill_status reads a snapshot and must not wait behind a running skill.
    ToolEnvelope env = tool == "get_skill_status" ? body() : executor_.run(body);
    env.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return env;
}

json Engine::call_json(const std::string& tool, const json& args) { return to_json(call(tool, args)); }

std::string Engine::state_digest()
{
    return executor_.run([&] {
        const auto& s = *state_;
        json j = {{"package", s.package ? json(s.package->package.manifest.name) : json(nullptr)},
                  {"circuit", s.circuit ? circuit_to_json(*s.circuit) : json(nullptr)},
                  {"solved", s.solution.has_value()},
                  {"qsts", s.qsts ? qsts::to_json(*s.qsts) : json(nullptr)},
                  {"shapes", s.shapes.export_json()},
                  {"uploaded", s.uploaded_profiles}};
        return hex64(fnv1a(j.dump()));
    });
}

std::optional<std::string> Engine::circuit_name()
{
    return executor_.run([&]() -> std::optional<std::string> {
        if (!state_->circuit) {
            return std::nullopt;
        }
        return state_->circuit->name;
    });
}

std::vector<Resource> Engine::resources()
{
    return executor_.run([&] {
        std::vector<Resource> out;
        if (!state_->package) {
            return out;
        }
        const auto& pkg = state_->package->package;
        for (const auto& [name, body] : dss::package_files(pkg)) {
            const bool csv = name.size() > 4 && name.substr(name.size() - 4) == ".csv";
            out.push_back({fmt::format("{}{}/{}", kResourceScheme, pkg.manifest.name, name), name,
                           csv ? "text/csv" : "text/plain"});
        }
        return out;
    });
}

std::string Engine::read_resource(const std::string& uri)
{
    return executor_.run([&] {
        if (state_->package) {
            const auto& pkg = state_->package->package;
            for (const auto& [name, body] : dss::package_files(pkg)) {
                if (uri == fmt::format("{}{}/{}", kResourceScheme, pkg.manifest.name, name)) {
                    return body;
                }
            }
        }
        throw Error(ErrorCode::UnknownResource, fmt::format("unknown resource '{}'", uri));
    });
}

std::string Engine::system_prompt(const std::optional<std::string>& circuit)
{
    const auto name = circuit ? circuit : circuit_name();
    return fmt::format(
        "You are a distribution-grid analysis assistant working on the circuit: {}.\n"
        "Voltages are in per-unit (p.u.) on each bus's nominal base; 1.0 p.u. is nominal. "
        "The acceptable band is 0.95 to 1.05 p.u.: below 0.95 is an undervoltage violation, "
        "above 1.05 an overvoltage violation. Three-phase voltages are reported as the "
        "positive-sequence magnitude. Power is in kW and kvar; negative kW on a load is generation.\n"
        "Use only the provided tools. Load a circuit before solving, solve before reading voltages, "
        "and run run_qsts before asking for time-series results. When a tool fails, follow its hint.",
        name ? *name : "no circuit loaded");
}

} // namespace gridmcp::mcp
