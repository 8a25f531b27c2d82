#include "engine_state.hpp"

#include "gridmcp/dsspkg/topology.hpp"
#include "gridmcp/pfcore/equipment.hpp"
#include "gridmcp/skills/skills.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace gridmcp::mcp {

using nlohmann::json;

namespace {

// Schema helpers

json object_schema(json properties, std::vector<std::string> required = {})
{
    return {{"type", "object"},
            {"properties", properties.is_null() ? json::object() : std::move(properties)},
            {"required", std::move(required)},
            {"additionalProperties", false}};
}

json text(const std::string& description)
{
    return {{"type", "string"}, {"minLength", 1}, {"description", description}};
}

json number(const std::string& description) { return {{"type", "number"}, {"description", description}}; }

json positive(const std::string& description)
{
    return {{"type", "number"}, {"exclusiveMinimum", 0}, {"description", description}};
}

json phases_property()
{
    return {{"type", "string"},
            {"enum", {"a", "b", "c", "ab", "ac", "bc", "abc"}},
            {"description", "Connected phases; all phases of the bus when omitted"}};
}

json limit_properties(json props)
{
    props["lower_pu"] = {{"type", "number"}, {"minimum", 0.5}, {"maximum", 1.5},
                         {"description", "Lower voltage limit in p.u. (default 0.95)"}};
    props["upper_pu"] = {{"type", "number"}, {"minimum", 0.5}, {"maximum", 1.5},
                         {"description", "Upper voltage limit in p.u. (default 1.05)"}};
    return props;
}

// State helpers

constexpr double kLower = 0.95;
constexpr double kUpper = 1.05;

json limits_json(double lower = kLower, double upper = kUpper)
{
    return {{"lower", lower}, {"upper", upper}, {"unit", "p.u."}};
}

std::string bus_list(const pf::Circuit& c)
{
    std::vector<std::string> ids;
    for (const auto& b : c.buses) {
        ids.push_back(b.id);
    }
    std::sort(ids.begin(), ids.end());
    return fmt::format("{}", fmt::join(ids, ", "));
}

const pf::Bus& find_bus(const pf::Circuit& c, const std::string& id)
{
    const auto* bus = c.find_bus(id);
    if (bus == nullptr) {
        throw ToolFailure(ErrorCode::UnknownBus, fmt::format("unknown bus '{}'", id),
                          fmt::format("use one of the circuit buses: {}", bus_list(c)));
    }
    return *bus;
}

json phase_voltages(const pf::PhaseVoltages& pv)
{
    json out = json::object();
    for (auto p : pv.phases.list()) {
        const auto v = pv[p];
        out[std::string(1, pf::phase_letter(p))] = {{"magnitude_pu", std::abs(v)},
                                                    {"angle_deg", std::arg(v) * 180.0 / std::numbers::pi}};
    }
    return out;
}

json bus_voltage_entry(const pf::PhaseVoltages& pv)
{
    return {{"per_unit", pf::positive_sequence_magnitude(pv)}, {"phases", phase_voltages(pv)}};
}

json bank_json(const pf::ShuntBank& b)
{
    return {{"id", b.id}, {"bus", b.bus}, {"phases", b.phases.str()}, {"kvar", b.kvar}, {"enabled", b.enabled}};
}

json taps_json(const pf::Circuit& c, const pf::RegulatorSpec& r)
{
    json taps = json::object();
    const auto* line = c.find_line(r.branch_ref);
    for (auto p : (line != nullptr ? line->phases : pf::PhaseSet::abc()).list()) {
        taps[std::string(1, pf::phase_letter(p))] = r.taps[pf::index(p)];
    }
    return taps;
}

json regulator_json(const pf::Circuit& c, const pf::RegulatorSpec& r)
{
    const auto* line = c.find_line(r.branch_ref);
    json ratio = json::object();
    for (auto p : (line != nullptr ? line->phases : pf::PhaseSet::abc()).list()) {
        ratio[std::string(1, pf::phase_letter(p))] = r.ratio(p);
    }
    return {{"id", r.id},
            {"branch", r.branch_ref},
            {"from_bus", line != nullptr ? line->from_bus : ""},
            {"to_bus", line != nullptr ? line->to_bus : ""},
            {"phases", line != nullptr ? line->phases.str() : "abc"},
            {"taps", taps_json(c, r)},
            {"ratio", ratio},
            {"step_pu", r.step_pu},
            {"tap_range", {pf::kMinTap, pf::kMaxTap}}};
}

std::optional<std::string> opt_string(const json& args, const char* key)
{
    if (args.contains(key) && args[key].is_string()) {
        return args[key].get<std::string>();
    }
    return std::nullopt;
}

std::optional<pf::PhaseSet> opt_phases(const json& args)
{
    if (auto p = opt_string(args, "phases")) {
        return pf::PhaseSet::parse(*p);
    }
    return std::nullopt;
}

std::string next_bank_id(const std::vector<pf::ShuntBank>& banks, const std::string& prefix, const std::string& bus)
{
    for (int n = 1;; ++n) {
        auto id = n == 1 ? fmt::format("{}_{}", prefix, bus) : fmt::format("{}_{}_{}", prefix, bus, n);
        if (std::none_of(banks.begin(), banks.end(), [&](const pf::ShuntBank& b) { return b.id == id; })) {
            return id;
        }
    }
}

void register_package_shapes(Engine::State& s, const std::vector<shapes::LoadShape>& package_shapes,
                             std::vector<std::string>& warnings)
{
    for (const auto& shape : package_shapes) {
        try {
            if (s.shapes.contains(shape.name)) {
                s.shapes.edit(shape.name, shape.multipliers, shape.interval_hours);
            } else {
                s.shapes.create(shape);
            }
        } catch (const Error& e) {
            warnings.push_back(fmt::format("loadshape '{}' not registered: {}", shape.name, e.what()));
        }
    }
}

json install_package(Engine::State& s, dss::LoadedPackage loaded)
{
    std::vector<std::string> warnings = loaded.warnings;
    register_package_shapes(s, loaded.built.shapes, warnings);
    for (const auto& load : loaded.built.circuit.loads) {
        if (load.shape_ref && !s.shapes.contains(*load.shape_ref)) {
            warnings.push_back(
                fmt::format("load '{}' refers to unknown shape '{}'; run_qsts will fail until it exists", load.id,
                            *load.shape_ref));
        }
    }
    s.circuit = loaded.built.circuit;
    s.package = std::move(loaded);
    s.solution.reset();
    s.qsts.reset();
    const auto& c = *s.circuit;
    json files = json::array();
    for (const auto& [name, body] : dss::package_files(s.package->package)) {
        files.push_back(name);
    }
    return {{"name", c.name},
            {"package", s.package->package.manifest.name},
            {"version", s.package->package.manifest.version},
            {"bus_count", c.buses.size()},
            {"line_count", c.lines.size()},
            {"load_count", c.loads.size()},
            {"capacitor_count", c.capacitors.size()},
            {"regulator_count", c.regulators.size()},
            {"files", files},
            {"warnings", warnings}};
}

std::vector<std::filesystem::path> roots(const Engine::State& s)
{
    std::vector<std::filesystem::path> out{s.config.library_root};
    out.insert(out.end(), s.config.extra_roots.begin(), s.config.extra_roots.end());
    return out;
}

// Core

json load_circuit(Engine::State& s, const json& args)
{
    const auto path = args.at("path").get<std::string>();
    bool escaped = false;
    for (const auto& root : roots(s)) {
        std::optional<dss::PathGuard> guard;
        try {
            guard.emplace(root);
        } catch (const std::exception&) {
            continue;
        }
        std::filesystem::path target;
        try {
            target = guard->resolve(path);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::PathEscapesWhitelist) {
                throw;
            }
            escaped = true;
            continue;
        }
        if (!guard->files().is_directory(target) && !guard->files().is_file(target)) {
            continue;
        }
        return install_package(s, dss::load_circuit_package(*guard, path));
    }
    if (escaped) {
        throw ToolFailure(ErrorCode::PathEscapesWhitelist, fmt::format("path '{}' is outside the allowed roots", path),
                          "use a package name from list_library_circuits or a path inside the circuit library");
    }
    throw ToolFailure(ErrorCode::NotFound, fmt::format("no circuit package at '{}'", path),
                      "call list_library_circuits to see the available packages");
}

json solve_power_flow(Engine::State& s, const json&)
{
    const auto& c = s.require_circuit();
    auto result = pf::solve_power_flow(c);
    if (!result.converged) {
        s.solution.reset();
        throw ToolFailure(ErrorCode::NoConvergence,
                          fmt::format("power flow did not converge in {} iterations", result.iterations),
                          "reduce the load (edit_load) or undo the last equipment change, then solve again",
                          {{"converged", false}, {"iterations", result.iterations},
                           {"max_mismatch", result.max_mismatch}});
    }
    s.solution = std::move(result);
    const auto& r = *s.solution;
    const auto profile = pf::positive_sequence_profile(r);
    auto lo = std::min_element(profile.begin(), profile.end(),
                               [](const auto& a, const auto& b) { return a.second < b.second; });
    auto hi = std::max_element(profile.begin(), profile.end(),
                               [](const auto& a, const auto& b) { return a.second < b.second; });
    std::size_t violations = 0;
    for (const auto& [bus, v] : profile) {
        violations += (v < kLower || v > kUpper) ? 1 : 0;
    }
    return {{"converged", true},
            {"iterations", r.iterations},
            {"max_mismatch", r.max_mismatch},
            {"total_loss", {{"kw", r.total_loss_kw}, {"kvar", r.total_loss_kvar}}},
            {"source_power", {{"kw", r.source_kw}, {"kvar", r.source_kvar}}},
            {"min_voltage", {{"bus", lo->first}, {"per_unit", lo->second}}},
            {"max_voltage", {{"bus", hi->first}, {"per_unit", hi->second}}},
            {"violation_count", violations},
            {"limits", limits_json()},
            {"units", {{"voltage", "p.u."}, {"power", "kW"}, {"reactive_power", "kvar"}}}};
}

json get_bus_voltage(Engine::State& s, const json& args)
{
    const auto id = args.at("bus").get<std::string>();
    const auto& c = s.require_circuit();
    const auto& bus = find_bus(c, id);
    const auto& r = s.require_solution();
    const auto& pv = r.bus_voltages.at(bus.id);
    auto entry = bus_voltage_entry(pv);
    const double v = entry["per_unit"].get<double>();
    entry["bus"] = bus.id;
    entry["base_kv"] = bus.base_kv;
    entry["within_limits"] = v >= kLower && v <= kUpper;
    entry["limits"] = limits_json();
    return entry;
}

json get_all_bus_voltages(Engine::State& s, const json&)
{
    s.require_circuit();
    const auto& r = s.require_solution();
    json voltages = json::object();
    for (const auto& [bus, pv] : r.bus_voltages) {
        voltages[bus] = bus_voltage_entry(pv);
    }
    return {{"voltages", voltages},
            {"limits", limits_json()},
            {"losses", {{"kw", r.total_loss_kw}, {"kvar", r.total_loss_kvar}}},
            {"units", {{"per_unit", "p.u. positive sequence"}, {"magnitude_pu", "p.u."}, {"angle_deg", "degrees"}}}};
}

json get_circuit_info(Engine::State& s, const json&)
{
    const auto& c = s.require_circuit();
    json buses = json::array();
    for (const auto& b : c.buses) {
        buses.push_back({{"id", b.id}, {"phases", b.phases.str()}, {"base_kv", b.base_kv}});
    }
    json loads = json::array();
    double kw = 0.0;
    double kvar = 0.0;
    for (const auto& l : c.loads) {
        loads.push_back({{"id", l.id},
                         {"bus", l.bus},
                         {"phases", l.phases.str()},
                         {"connection", l.connection == pf::Connection::Delta ? "delta" : "wye"},
                         {"kw", l.kw},
                         {"kvar", l.kvar},
                         {"shape", l.shape_ref ? json(*l.shape_ref) : json(nullptr)}});
        kw += l.kw;
        kvar += l.kvar;
    }
    return {{"name", c.name},
            {"package", s.package ? s.package->package.manifest.name : c.name},
            {"source_bus", c.source.bus},
            {"source_kv", c.source.base_kv},
            {"source_pu", c.source.pu},
            {"base_kva", c.base_kva},
            {"bus_count", c.buses.size()},
            {"buses", buses},
            {"line_count", c.lines.size()},
            {"loads", loads},
            {"total_load", {{"kw", kw}, {"kvar", kvar}}},
            {"capacitor_count", c.capacitors.size()},
            {"reactor_count", c.reactors.size()},
            {"regulator_count", c.regulators.size()},
            {"solved", s.solution.has_value()},
            {"units", {{"base_kv", "kV line-to-line"}, {"kw", "kW"}, {"kvar", "kvar"}}}};
}

json edit_load(Engine::State& s, const json& args)
{
    auto& c = s.require_circuit();
    const auto id = args.at("load").get<std::string>();
    const bool has_kw = args.contains("kw");
    const bool has_kvar = args.contains("kvar");
    const bool has_mult = args.contains("multiplier");
    if (!has_kw && !has_kvar && !has_mult) {
        throw ToolFailure(ErrorCode::InvalidArgument, "edit_load needs kw, kvar or multiplier",
                          "pass at least one of kw, kvar or multiplier");
    }
    std::vector<pf::LoadSpec*> targets;
    if (id == "*") {
        if (has_kw || has_kvar) {
            throw ToolFailure(ErrorCode::InvalidArgument, "load '*' only accepts multiplier",
                              "use a single load id to set kw or kvar");
        }
        for (auto& l : c.loads) {
            targets.push_back(&l);
        }
    } else {
        auto* l = c.find_load(id);
        if (l == nullptr) {
            std::vector<std::string> ids;
            for (const auto& x : c.loads) {
                ids.push_back(x.id);
            }
            throw ToolFailure(ErrorCode::UnknownLoad, fmt::format("unknown load '{}'", id),
                              fmt::format("use one of the loads: {}", fmt::join(ids, ", ")));
        }
        targets.push_back(l);
    }
    const double m = has_mult ? args["multiplier"].get<double>() : 1.0;
    json changed = json::array();
    for (auto* l : targets) {
        const double kw = (has_kw ? args["kw"].get<double>() : l->kw) * m;
        const double kvar = (has_kvar ? args["kvar"].get<double>() : l->kvar) * m;
        changed.push_back({{"load", l->id},
                           {"previous", {{"kw", l->kw}, {"kvar", l->kvar}}},
                           {"kw", kw},
                           {"kvar", kvar}});
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        pf::apply_equipment_change(c, pf::EditLoad{targets[i]->id, changed[i]["kw"].get<double>(),
                                                   changed[i]["kvar"].get<double>()});
    }
    s.invalidate();
    return {{"loads", changed}, {"units", {{"kw", "kW"}, {"kvar", "kvar"}}},
            {"note", "negative kW models generation; call solve_power_flow to see the effect"}};
}

// LoadShape

json shape_entry(const Engine::State& s, const shapes::LoadShape& shape)
{
    auto j = shapes::to_json(shape);
    json assigned = json::array();
    if (s.circuit) {
        for (const auto& l : s.circuit->loads) {
            if (l.shape_ref == shape.name) {
                assigned.push_back(l.id);
            }
        }
    }
    j["assigned_loads"] = assigned;
    j["points"] = shape.multipliers.size();
    return j;
}

json create_loadshape(Engine::State& s, const json& args)
{
    shapes::LoadShape shape;
    shape.name = args.at("name").get<std::string>();
    shape.multipliers = args.at("multipliers").get<std::vector<double>>();
    shape.interval_hours = args.value("interval_hours", 1.0);
    shape.source = shapes::ShapeSource::Custom;
    s.shapes.create(shape);
    return shape_entry(s, s.shapes.get(shape.name));
}

json edit_loadshape(Engine::State& s, const json& args)
{
    const auto name = args.at("name").get<std::string>();
    std::optional<double> interval;
    if (args.contains("interval_hours")) {
        interval = args["interval_hours"].get<double>();
    }
    const bool point = args.contains("index") || args.contains("value");
    if (args.contains("multipliers")) {
        if (point) {
            throw ToolFailure(ErrorCode::InvalidArgument, "give either multipliers or index/value, not both",
                              "replace the whole shape with multipliers or one point with index and value");
        }
        s.shapes.edit(name, args["multipliers"].get<std::vector<double>>(), interval);
    } else if (point) {
        if (!args.contains("index") || !args.contains("value")) {
            throw ToolFailure(ErrorCode::InvalidArgument, "index and value must be given together",
                              "pass both index and value to change one point");
        }
        s.shapes.edit_point(name, args["index"].get<std::size_t>(), args["value"].get<double>());
        if (interval) {
            s.shapes.edit(name, s.shapes.get(name).multipliers, interval);
        }
    } else if (interval) {
        s.shapes.edit(name, s.shapes.get(name).multipliers, interval);
    } else {
        throw ToolFailure(ErrorCode::InvalidArgument, "nothing to edit",
                          "pass multipliers, index and value, or interval_hours");
    }
    return shape_entry(s, s.shapes.get(name));
}

json delete_loadshape(Engine::State& s, const json& args)
{
    const auto name = args.at("name").get<std::string>();
    s.shapes.remove(name, [&](std::string_view n) {
        if (!s.circuit) {
            return false;
        }
        return std::any_of(s.circuit->loads.begin(), s.circuit->loads.end(),
                           [&](const pf::LoadSpec& l) { return l.shape_ref && *l.shape_ref == n; });
    });
    s.uploaded_profiles.erase(name);
    return {{"deleted", name}};
}

json list_loadshapes(Engine::State& s, const json&)
{
    json list = json::array();
    for (const auto& shape : s.shapes.list()) {
        auto e = shape_entry(s, shape);
        e.erase("multipliers");
        list.push_back(std::move(e));
    }
    return {{"shapes", list}, {"count", list.size()}};
}

json get_loadshape(Engine::State& s, const json& args)
{
    return shape_entry(s, s.shapes.get(args.at("name").get<std::string>()));
}

json assign_loadshape(Engine::State& s, const json& args)
{
    auto& c = s.require_circuit();
    const auto load = args.at("load").get<std::string>();
    std::optional<std::string> shape;
    if (args.contains("shape") && args["shape"].is_string() && args["shape"].get<std::string>() != "none") {
        shape = args["shape"].get<std::string>();
        if (!s.shapes.contains(*shape)) {
            throw ToolFailure(ErrorCode::UnknownShape, fmt::format("unknown load shape '{}'", *shape),
                              "call list_loadshapes for the available shapes or create_loadshape to add one");
        }
    }
    json assigned = json::array();
    for (auto& l : c.loads) {
        if (load == "*" || l.id == load) {
            l.shape_ref = shape;
            assigned.push_back(l.id);
        }
    }
    if (assigned.empty()) {
        throw ToolFailure(ErrorCode::UnknownLoad, fmt::format("unknown load '{}'", load),
                          "call get_circuit_info for the load ids, or use '*' for every load");
    }
    return {{"loads", assigned}, {"shape", shape ? json(*shape) : json(nullptr)}};
}

// QSTS

qsts::ShapeLookup registry_lookup(const Engine::State& s)
{
    return [&s](const std::string& name) -> std::optional<shapes::LoadShape> {
        if (!s.shapes.contains(name)) {
            return std::nullopt;
        }
        return s.shapes.get(name);
    };
}

const qsts::QstsResult& require_qsts(const Engine::State& s)
{
    if (!s.qsts) {
        throw ToolFailure(ErrorCode::NoQstsResult, "no QSTS result available",
                          "call run_qsts first, then query the results");
    }
    return *s.qsts;
}

json extreme_json(const qsts::Extreme& e)
{
    return {{"per_unit", e.per_unit}, {"step", e.step}, {"bus", e.bus}};
}

json summary_json(const qsts::QstsResult& r)
{
    return {{"min_voltage", extreme_json(r.summary.min_voltage)},
            {"max_voltage", extreme_json(r.summary.max_voltage)},
            {"violation_step_count", r.summary.violation_step_count},
            {"violation_count", r.summary.violation_count},
            {"energy_loss_kwh", r.summary.energy_loss_kwh},
            {"energy_loss_kvarh", r.summary.energy_loss_kvarh}};
}

json run_qsts(Engine::State& s, const json& args)
{
    const auto& c = s.require_circuit();
    const auto steps = args.value("steps", static_cast<std::size_t>(24));
    const double step_hours = args.value("step_hours", 1.0);
    qsts::Limits limits{args.value("lower_pu", kLower), args.value("upper_pu", kUpper)};
    auto result = qsts::run_qsts(c, steps, step_hours, registry_lookup(s), limits);
    s.qsts = std::move(result);
    const auto& r = *s.qsts;
    json shaped = json::array();
    for (const auto& l : c.loads) {
        if (l.shape_ref) {
            shaped.push_back({{"load", l.id}, {"shape", *l.shape_ref}});
        }
    }
    json out = {{"circuit", r.circuit},
                {"steps", r.steps()},
                {"requested_steps", r.requested_steps},
                {"step_hours", r.step_hours},
                {"bus_count", r.buses.size()},
                {"summary", summary_json(r)},
                {"shaped_loads", shaped},
                {"limits", limits_json(limits.lower, limits.upper)},
                {"diverged_at", r.diverged_at ? json(*r.diverged_at) : json(nullptr)},
                {"units", {{"voltage", "p.u."}, {"energy", "kWh"}, {"step_hours", "h"}}}};
    if (r.diverged_at) {
        out["warning"] = fmt::format("step {} did not converge; the run stopped there", *r.diverged_at);
    }
    return out;
}

json get_qsts_voltage_profile(Engine::State& s, const json& args)
{
    const auto& r = require_qsts(s);
    std::vector<std::string> wanted = r.buses;
    if (args.contains("buses")) {
        wanted = args["buses"].get<std::vector<std::string>>();
    }
    json voltages = json::object();
    for (const auto& bus : wanted) {
        auto it = std::find(r.buses.begin(), r.buses.end(), bus);
        if (it == r.buses.end()) {
            throw ToolFailure(ErrorCode::UnknownBus, fmt::format("bus '{}' is not in the QSTS result", bus),
                              fmt::format("use buses from the last run: {}", fmt::join(r.buses, ", ")));
        }
        const auto col = static_cast<std::size_t>(it - r.buses.begin());
        std::vector<double> series;
        for (const auto& row : r.voltages) {
            series.push_back(row[col]);
        }
        voltages[bus] = series;
    }
    return {{"steps", r.steps()},
            {"step_hours", r.step_hours},
            {"buses", wanted},
            {"voltages_pu", voltages},
            {"limits", limits_json(r.limits.lower, r.limits.upper)},
            {"units", {{"voltages_pu", "p.u. positive sequence"}, {"step_hours", "h"}}}};
}

json get_qsts_losses(Engine::State& s, const json&)
{
    const auto& r = require_qsts(s);
    return {{"steps", r.steps()},
            {"step_hours", r.step_hours},
            {"loss_kw", r.loss_kw},
            {"loss_kvar", r.loss_kvar},
            {"energy_loss_kwh", r.summary.energy_loss_kwh},
            {"energy_loss_kvarh", r.summary.energy_loss_kvarh},
            {"units", {{"loss_kw", "kW"}, {"loss_kvar", "kvar"}, {"energy_loss_kwh", "kWh"}}}};
}

json get_qsts_summary(Engine::State& s, const json&)
{
    const auto& r = require_qsts(s);
    json violations = json::array();
    for (const auto& v : r.violations) {
        violations.push_back(
            {{"step", v.step}, {"bus", v.bus}, {"voltage_pu", v.voltage}, {"kind", qsts::to_string(v.kind)}});
    }
    auto out = summary_json(r);
    out["steps"] = r.steps();
    out["step_hours"] = r.step_hours;
    out["violations"] = violations;
    out["limits"] = limits_json(r.limits.lower, r.limits.upper);
    out["units"] = {{"per_unit", "p.u."}, {"energy_loss_kwh", "kWh"}};
    return out;
}

// Profile

bool is_profile(const Engine::State& s, const std::string& name)
{
    if (s.uploaded_profiles.count(name) != 0) {
        return true;
    }
    const auto& b = shapes::builtin_profiles();
    return std::any_of(b.begin(), b.end(), [&](const shapes::LoadShape& x) { return x.name == name; });
}

json profile_entry(const shapes::LoadShape& shape)
{
    const auto& m = shape.multipliers;
    double sum = 0.0;
    for (double v : m) {
        sum += v;
    }
    return {{"name", shape.name},
            {"source", shape.source == shapes::ShapeSource::Builtin ? "builtin" : "uploaded"},
            {"points", m.size()},
            {"interval_hours", shape.interval_hours},
            {"peak", *std::max_element(m.begin(), m.end())},
            {"minimum", *std::min_element(m.begin(), m.end())},
            {"mean", sum / static_cast<double>(m.size())}};
}

json list_profiles(Engine::State& s, const json&)
{
    json list = json::array();
    for (const auto& shape : s.shapes.list()) {
        if (is_profile(s, shape.name)) {
            list.push_back(profile_entry(shape));
        }
    }
    return {{"profiles", list}, {"count", list.size()}};
}

json get_profile(Engine::State& s, const json& args)
{
    const auto name = args.at("name").get<std::string>();
    if (!is_profile(s, name) || !s.shapes.contains(name)) {
        throw ToolFailure(ErrorCode::UnknownShape, fmt::format("unknown profile '{}'", name),
                          "call list_profiles for the built-in and uploaded profiles");
    }
    auto entry = profile_entry(s.shapes.get(name));
    entry["multipliers"] = s.shapes.get(name).multipliers;
    return entry;
}

json load_profile_csv(Engine::State& s, const json& args)
{
    const auto name = args.at("name").get<std::string>();
    auto shape = shapes::parse_profile_csv(args.at("csv").get<std::string>(), name, args.value("interval_hours", 1.0));
    s.shapes.create(shape);
    s.uploaded_profiles.insert(name);
    auto entry = profile_entry(s.shapes.get(name));
    entry["multipliers"] = shape.multipliers;
    return entry;
}

// Export

json export_results(Engine::State& s, const json& args)
{
    const auto& r = require_qsts(s);
    const auto format = args.at("format").get<std::string>();
    const auto content = qsts::export_results(r, format);
    return {{"format", format},
            {"media_type", format == "csv" ? "text/csv" : "application/json"},
            {"bytes", content.size()},
            {"content", content}};
}

json generate_report(Engine::State& s, const json&)
{
    const auto& r = require_qsts(s);
    auto html = qsts::generate_report(r);
    return {{"media_type", "text/html"},
            {"bytes", html.size()},
            {"violation_count", r.summary.violation_count},
            {"html", std::move(html)}};
}

// Capacitor and reactor

template <typename Add>
json add_bank(Engine::State& s, const json& args, bool capacitor)
{
    auto& c = s.require_circuit();
    const auto bus = args.at("bus").get<std::string>();
    find_bus(c, bus);
    const auto& banks = capacitor ? c.capacitors : c.reactors;
    const auto id = opt_string(args, "id").value_or(next_bank_id(banks, capacitor ? "cap" : "reactor", bus));
    pf::apply_equipment_change(c, Add{id, bus, opt_phases(args), args.at("kvar").get<double>()});
    s.invalidate();
    const auto& list = capacitor ? c.capacitors : c.reactors;
    auto it = std::find_if(list.begin(), list.end(), [&](const pf::ShuntBank& b) { return b.id == id; });
    auto out = bank_json(*it);
    out["units"] = {{"kvar", "kvar at 1.0 p.u."}};
    return out;
}

json add_capacitor(Engine::State& s, const json& args) { return add_bank<pf::AddCapacitor>(s, args, true); }
json add_reactor(Engine::State& s, const json& args) { return add_bank<pf::AddReactor>(s, args, false); }

json remove_capacitor(Engine::State& s, const json& args)
{
    auto& c = s.require_circuit();
    const auto id = args.at("id").get<std::string>();
    pf::apply_equipment_change(c, pf::RemoveCapacitor{id, false});
    s.invalidate();
    return {{"removed", id}, {"remaining", c.capacitors.size()}};
}

json remove_reactor(Engine::State& s, const json& args)
{
    auto& c = s.require_circuit();
    const auto id = args.at("id").get<std::string>();
    pf::apply_equipment_change(c, pf::RemoveReactor{id, false});
    s.invalidate();
    return {{"removed", id}, {"remaining", c.reactors.size()}};
}

json list_capacitors(Engine::State& s, const json&)
{
    json list = json::array();
    double total = 0.0;
    for (const auto& b : s.require_circuit().capacitors) {
        list.push_back(bank_json(b));
        total += b.kvar;
    }
    return {{"capacitors", list}, {"total_kvar", total}, {"units", {{"kvar", "kvar"}}}};
}

json list_reactors(Engine::State& s, const json&)
{
    json list = json::array();
    double total = 0.0;
    for (const auto& b : s.require_circuit().reactors) {
        list.push_back(bank_json(b));
        total += b.kvar;
    }
    return {{"reactors", list}, {"total_kvar", total}, {"units", {{"kvar", "kvar"}}}};
}

// Regulator

json list_regulators(Engine::State& s, const json&)
{
    const auto& c = s.require_circuit();
    json list = json::array();
    for (const auto& r : c.regulators) {
        list.push_back(regulator_json(c, r));
    }
    return {{"regulators", list}};
}

const pf::RegulatorSpec& find_regulator(const pf::Circuit& c, const std::string& id)
{
    const auto* r = c.find_regulator(id);
    if (r == nullptr) {
        std::vector<std::string> ids;
        for (const auto& x : c.regulators) {
            ids.push_back(x.id);
        }
        throw ToolFailure(ErrorCode::UnknownDevice, fmt::format("unknown regulator '{}'", id),
                          ids.empty() ? std::string("this circuit has no regulators")
                                      : fmt::format("use one of: {}", fmt::join(ids, ", ")));
    }
    return *r;
}

json get_tap_positions(Engine::State& s, const json& args)
{
    const auto& c = s.require_circuit();
    json out = json::object();
    if (auto id = opt_string(args, "regulator")) {
        out[*id] = taps_json(c, find_regulator(c, *id));
    } else {
        for (const auto& r : c.regulators) {
            out[r.id] = taps_json(c, r);
        }
    }
    return {{"regulators", out}, {"tap_range", {pf::kMinTap, pf::kMaxTap}}, {"step_pu", pf::kDefaultTapStep}};
}

json set_tap_position(Engine::State& s, const json& args)
{
    auto& c = s.require_circuit();
    const auto id = args.at("regulator").get<std::string>();
    find_regulator(c, id);
    std::optional<pf::Phase> phase;
    if (auto p = opt_string(args, "phase")) {
        phase = pf::PhaseSet::parse(*p).list().front();
    }
    pf::apply_equipment_change(c, pf::SetTap{id, phase, static_cast<int>(args.at("tap").get<std::int64_t>())});
    s.invalidate();
    return regulator_json(c, *c.find_regulator(id));
}

// Library

json list_library_circuits(Engine::State& s, const json&)
{
    json list = json::array();
    dss::PathGuard guard(s.config.library_root);
    for (const auto& e : dss::list_library(guard)) {
        auto j = dss::to_json(e.manifest);
        j["directory"] = e.directory.filename().string();
        list.push_back(std::move(j));
    }
    return {{"circuits", list}, {"count", list.size()}};
}

json load_library_circuit(Engine::State& s, const json& args)
{
    const auto name = args.at("name").get<std::string>();
    dss::PathGuard guard(s.config.library_root);
    std::vector<std::string> names;
    for (const auto& e : dss::list_library(guard)) {
        if (e.manifest.name == name || e.directory.filename().string() == name) {
            return install_package(s, dss::load_circuit_package(guard, e.directory));
        }
        names.push_back(e.manifest.name);
    }
    throw ToolFailure(ErrorCode::NotFound, fmt::format("no library circuit named '{}'", name),
                      fmt::format("use one of: {}", fmt::join(names, ", ")));
}

// Topology

json get_topology(Engine::State& s, const json&)
{
    const auto& c = s.require_circuit();
    auto j = dss::to_json(dss::topology_graph(c));
    std::map<std::string, double> volts;
    if (s.solution) {
        volts = pf::positive_sequence_profile(*s.solution);
    }
    for (auto& node : j["nodes"]) {
        const auto bus = node["bus"].get<std::string>();
        node["voltage_pu"] = volts.count(bus) != 0 ? json(volts[bus]) : json(nullptr);
    }
    for (auto& edge : j["edges"]) {
        const auto* line = c.find_line(edge["branch"].get<std::string>());
        const auto z1 = branch_z1_pu(c, *line);
        edge["r1_pu"] = z1.real();
        edge["x1_pu"] = z1.imag();
        edge["is_regulator"] = c.regulator_on(line->id) != nullptr;
    }
    j["source"] = c.source.bus;
    j["solved"] = s.solution.has_value();
    j["units"] = {{"voltage_pu", "p.u."}, {"r1_pu", "p.u. on system base"}, {"x1_pu", "p.u. on system base"},
                  {"base_kv", "kV line-to-line"}};
    return j;
}

// Skill

json recommend_skill(Engine::State& s, const json& args)
{
    json ranked = json::array();
    json out = {{"query", args.value("query", "")}};
    if (!s.circuit || !s.solution) {
        ranked.push_back({{"skill", skills::kViolationAnalysis},
                          {"reason", "solve the circuit first; voltages decide which skill applies"}});
        out["solved"] = false;
    } else {
        for (const auto& r : skills::recommend_skills(pf::positive_sequence_profile(*s.solution))) {
            ranked.push_back({{"skill", r.skill}, {"reason", r.reason}});
        }
        out["solved"] = true;
    }
    out["recommendations"] = ranked;
    return out;
}

json invoke_skill(Engine::State& s, const json& args)
{
    const auto name = args.at("skill").get<std::string>();
    const json config = args.value("config", json::object());
    {
        std::lock_guard lock(s.progress_mutex);
        s.progress.running = true;
        s.progress.skill = name;
        s.progress.phase = "starting";
        s.progress.iteration = 0;
        s.progress.total = 0;
        s.progress.tool_calls = 0;
    }
    auto finish = [&](const std::string& status) {
        std::lock_guard lock(s.progress_mutex);
        s.progress.running = false;
        s.progress.phase = "done";
        s.progress.last_skill = name;
        s.progress.last_status = status;
    };
    skills::ToolInvoker invoker = [&](const std::string& tool, const json& a) {
        {
            std::lock_guard lock(s.progress_mutex);
            ++s.progress.tool_calls;
        }
        return s.dispatch(tool, a);
    };
    skills::ProgressSink sink = [&](const skills::Progress& p) {
        std::lock_guard lock(s.progress_mutex);
        s.progress.phase = p.phase;
        s.progress.iteration = p.iteration;
        s.progress.total = p.total;
    };
    skills::SkillReport report;
    try {
        report = skills::run_skill(name, config, invoker, sink);
    } catch (...) {
        finish("failed");
        throw;
    }
    finish(std::string(skills::to_string(report.status)));
    json data = {{"report", skills::to_json(report)}};
    if (report.error) {
        const auto code = report.error->code;
        ErrorCode ec = ErrorCode::InvalidArgument;
        for (int i = 0; i <= static_cast<int>(ErrorCode::EngineBusy); ++i) {
            if (to_string(static_cast<ErrorCode>(i)) == code) {
                ec = static_cast<ErrorCode>(i);
            }
        }
        throw ToolFailure(ec, report.error->message, report.error->hint, data);
    }
    return data;
}

json get_skill_status(Engine::State& s, const json&)
{
    std::lock_guard lock(s.progress_mutex);
    const auto& p = s.progress;
    return {{"running", p.running},
            {"skill", p.skill.empty() ? json(nullptr) : json(p.skill)},
            {"phase", p.phase},
            {"iteration", p.iteration},
            {"total", p.total},
            {"tool_calls", p.tool_calls},
            {"last", p.last_skill.empty() ? json(nullptr)
                                          : json{{"skill", p.last_skill}, {"status", p.last_status}}},
            {"available", skills::skill_names()}};
}

struct Entry {
    ToolSpec spec;
    ToolHandler handler;
};

std::vector<Entry> build_catalog()
{
    const json no_args = object_schema(json::object());
    const json name_arg = object_schema({{"name", text("Load shape name")}}, {"name"});
    const json multipliers = {{"type", "array"},
                              {"items", {{"type", "number"}, {"minimum", 0}}},
                              {"minItems", 1},
                              {"maxItems", 8760},
                              {"description", "Load multipliers, one per interval"}};
    const json interval = {{"type", "number"}, {"exclusiveMinimum", 0}, {"maximum", 24},
                           {"description", "Hours per multiplier (default 1)"}};
    const json bank_add = object_schema({{"id", text("Bank id; generated from the bus name when omitted")},
                                         {"bus", text("Bus to connect to")},
                                         {"kvar", positive("Rating in kvar at 1.0 p.u.")},
                                         {"phases", phases_property()}},
                                        {"bus", "kvar"});

    std::vector<Entry> c;
    auto add = [&](std::string name, std::string category, std::string description, json schema,
                   ToolHandler handler) {
        c.push_back({{std::move(name), std::move(category), std::move(description), std::move(schema)},
                     std::move(handler)});
    };

    add("load_circuit", "Core", "Load an OpenDSS-subset circuit package (directory or master.dss) from an allowed root.",
        object_schema({{"path", text("Package directory or master.dss path, relative to the circuit library")}},
                      {"path"}),
        load_circuit);
    add("solve_power_flow", "Core",
        "Run a three-phase power flow on the loaded circuit; returns convergence, losses and voltage extremes.",
        no_args, solve_power_flow);
    add("get_bus_voltage", "Core", "Voltage of one bus after a solve: positive-sequence per_unit plus each phase.",
        object_schema({{"bus", text("Bus name")}}, {"bus"}), get_bus_voltage);
    add("get_all_bus_voltages", "Core", "Voltages of every bus after a solve, keyed by bus name, with limits.",
        no_args, get_all_bus_voltages);
    add("get_circuit_info", "Core", "Circuit summary: source, buses, loads and equipment counts.", no_args,
        get_circuit_info);
    add("edit_load", "Core",
        "Change a load's kW/kvar or scale it; negative kW models generation. Load '*' with multiplier scales all.",
        object_schema({{"load", text("Load id, or '*' for every load (multiplier only)")},
                       {"kw", number("New real power in kW (negative for generation)")},
                       {"kvar", number("New reactive power in kvar")},
                       {"multiplier", {{"type", "number"}, {"minimum", 0}, {"maximum", 100},
                                       {"description", "Scale factor applied after kw/kvar"}}}},
                      {"load"}),
        edit_load);

    add("create_loadshape", "LoadShape", "Create a custom load shape from a list of multipliers.",
        object_schema({{"name", text("New shape name")}, {"multipliers", multipliers}, {"interval_hours", interval}},
                      {"name", "multipliers"}),
        create_loadshape);
    add("edit_loadshape", "LoadShape",
        "Edit a custom load shape: replace the multipliers, set one point (index, value) or change the interval.",
        object_schema({{"name", text("Shape name")},
                       {"multipliers", multipliers},
                       {"index", {{"type", "integer"}, {"minimum", 0}, {"description", "Point to change"}}},
                       {"value", {{"type", "number"}, {"minimum", 0}, {"description", "New multiplier"}}},
                       {"interval_hours", interval}},
                      {"name"}),
        edit_loadshape);
    add("delete_loadshape", "LoadShape", "Delete a custom load shape that no load uses.", name_arg, delete_loadshape);
    add("list_loadshapes", "LoadShape", "List every load shape with its source and assigned loads.", no_args,
        list_loadshapes);
    add("get_loadshape", "LoadShape", "Get one load shape with its multipliers.", name_arg, get_loadshape);
    add("assign_loadshape", "LoadShape", "Attach a shape to a load ('*' for all); shape null or 'none' detaches.",
        object_schema({{"load", text("Load id or '*'")},
                       {"shape", {{"type", {"string", "null"}}, {"description", "Shape name, 'none' or null"}}}},
                      {"load", "shape"}),
        assign_loadshape);

    add("run_qsts", "QSTS",
        "Run a quasi-static time series: one power flow per step with shaped loads scaled; stores the result.",
        object_schema(limit_properties({{"steps", {{"type", "integer"}, {"minimum", 1}, {"maximum", 8760},
                                                   {"description", "Number of steps (default 24)"}}},
                                        {"step_hours", interval}})),
        run_qsts);
    add("get_qsts_voltage_profile", "QSTS", "Per-step positive-sequence voltages from the last QSTS run.",
        object_schema({{"buses", {{"type", "array"}, {"items", {{"type", "string"}, {"minLength", 1}}},
                                  {"description", "Buses to return (all when omitted)"}}}}),
        get_qsts_voltage_profile);
    add("get_qsts_losses", "QSTS", "Per-step losses and energy totals from the last QSTS run.", no_args,
        get_qsts_losses);
    add("get_qsts_summary", "QSTS", "Summary KPIs and the violation list from the last QSTS run.", no_args,
        get_qsts_summary);

    add("list_profiles", "Profile", "List the built-in and uploaded daily profiles with peak and mean.", no_args,
        list_profiles);
    add("get_profile", "Profile", "Get one profile's multipliers.", object_schema({{"name", text("Profile name")}},
                                                                                 {"name"}),
        get_profile);
    add("load_profile_csv", "Profile", "Register a profile from two-column CSV text (index or hour, multiplier).",
        object_schema({{"name", text("Profile name")},
                       {"csv", text("CSV text; one optional header row")},
                       {"interval_hours", interval}},
                      {"name", "csv"}),
        load_profile_csv);

    add("export_results", "Export", "Export the last QSTS result as CSV or JSON text.",
        object_schema({{"format", {{"type", "string"}, {"enum", {"csv", "json"}}, {"description", "Output format"}}}},
                      {"format"}),
        export_results);
    add("generate_report", "Export", "Self-contained HTML report of the last QSTS run.", no_args, generate_report);

    add("add_capacitor", "Capacitor", "Add a shunt capacitor bank (kvar at 1.0 p.u.).", bank_add, add_capacitor);
    add("remove_capacitor", "Capacitor", "Remove a capacitor bank by id.",
        object_schema({{"id", text("Capacitor id")}}, {"id"}), remove_capacitor);
    add("list_capacitors", "Capacitor", "List capacitor banks.", no_args, list_capacitors);

    add("add_reactor", "Reactor", "Add a shunt reactor bank (kvar absorbed at 1.0 p.u.).", bank_add, add_reactor);
    add("remove_reactor", "Reactor", "Remove a reactor bank by id.", object_schema({{"id", text("Reactor id")}},
                                                                                   {"id"}),
        remove_reactor);
    add("list_reactors", "Reactor", "List reactor banks.", no_args, list_reactors);

    add("list_regulators", "Regulator", "List voltage regulators with branch, taps and ratios.", no_args,
        list_regulators);
    add("get_tap_positions", "Regulator", "Tap positions per phase for one or all regulators.",
        object_schema({{"regulator", text("Regulator id (all when omitted)")}}), get_tap_positions);
    add("set_tap_position", "Regulator", "Set a regulator tap (-16..16) on one phase or all phases.",
        object_schema({{"regulator", text("Regulator id")},
                       {"tap", {{"type", "integer"}, {"minimum", pf::kMinTap}, {"maximum", pf::kMaxTap},
                                {"description", "Tap position; ratio is 1 + 0.00625 * tap"}}},
                       {"phase", {{"type", "string"}, {"enum", {"a", "b", "c"}},
                                  {"description", "Phase to change (all when omitted)"}}}},
                      {"regulator", "tap"}),
        set_tap_position);

    add("list_library_circuits", "Circuit Library", "List the circuit packages in the library.", no_args,
        list_library_circuits);
    add("load_library_circuit", "Circuit Library", "Load a library circuit by name.",
        object_schema({{"name", text("Library circuit name")}}, {"name"}), load_library_circuit);

    add("get_topology", "Topology",
        "Network graph: buses with coordinates, kind and voltage (when solved); branches with impedance.", no_args,
        get_topology);

    add("recommend_skill", "Skill", "Rank the skills that fit the current voltage state.",
        object_schema({{"query", {{"type", "string"}, {"description", "What the user wants to achieve"}}}}),
        recommend_skill);
    add("invoke_skill", "Skill", "Run a multi-step skill and return its report.",
        object_schema({{"skill", {{"type", "string"},
                                  {"enum", skills::skill_names()},
                                  {"description", "Skill name"}}},
                       {"config", {{"type", "object"}, {"description", "Skill-specific settings"}}}},
                      {"skill"}),
        invoke_skill);
    add("get_skill_status", "Skill", "Progress of the running skill and the status of the last one.", no_args,
        get_skill_status);
    return c;
}

const std::vector<Entry>& catalog()
{
    static const std::vector<Entry> entries = build_catalog();
    return entries;
}

} // namespace

const std::vector<ToolSpec>& tool_catalog()
{
    static const std::vector<ToolSpec> specs = [] {
        std::vector<ToolSpec> out;
        for (const auto& e : catalog()) {
            out.push_back(e.spec);
        }
        return out;
    }();
    return specs;
}

const std::vector<std::string>& tool_categories()
{
    static const std::vector<std::string> names{"Core",       "LoadShape", "QSTS",      "Profile",
                                                "Export",     "Capacitor", "Reactor",   "Regulator",
                                                "Circuit Library", "Topology", "Skill"};
    return names;
}

const ToolHandler* find_handler(const std::string& name)
{
    for (const auto& e : catalog()) {
        if (e.spec.name == name) {
            return &e.handler;
        }
    }
    return nullptr;
}

pf::cplx branch_z1_pu(const pf::Circuit& circuit, const pf::LineBranch& line)
{
    const auto phases = line.phases.list();
    pf::cplx self{};
    pf::cplx mutual{};
    std::size_t n_mutual = 0;
    for (auto p : phases) {
        self += line.z_ohm(p, p);
        for (auto q : phases) {
            if (p != q) {
                mutual += line.z_ohm(p, q);
                ++n_mutual;
            }
        }
    }
    self /= static_cast<double>(phases.size());
    if (n_mutual > 0) {
        mutual /= static_cast<double>(n_mutual);
    }
    const auto* from = circuit.find_bus(line.from_bus);
    const double zbase = pf::impedance_base(from != nullptr ? from->base_kv : circuit.source.base_kv, circuit.base_kva);
    return (self - mutual) / zbase;
}

std::string default_hint(ErrorCode code, const std::string& tool)
{
    switch (code) {
    case ErrorCode::NoCircuitLoaded:
        return "load the circuit first with load_library_circuit or load_circuit";
    case ErrorCode::UnsolvedCircuit:
        return "call solve_power_flow first, then retry " + tool;
    case ErrorCode::NoQstsResult:
        return "call run_qsts first, then retry " + tool;
    case ErrorCode::UnknownShape:
        return "call list_loadshapes for the available shapes";
    case ErrorCode::DuplicateName:
        return "pick a different name or edit the existing shape with edit_loadshape";
    case ErrorCode::BuiltinImmutable:
        return "built-in shapes cannot change; create_loadshape a copy under a new name";
    case ErrorCode::ShapeInUse:
        return "detach the shape with assign_loadshape (shape 'none') before deleting it";
    case ErrorCode::UnknownDevice:
        return "list the devices (list_capacitors, list_reactors, list_regulators) and use an existing id";
    case ErrorCode::DuplicateDeviceId:
        return "choose another id or omit id to generate one";
    case ErrorCode::TapOutOfRange:
        return "taps range from -16 to 16";
    case ErrorCode::UnknownLoad:
        return "call get_circuit_info for the load ids";
    case ErrorCode::UnknownBus:
        return "call get_circuit_info for the bus names";
    case ErrorCode::PathEscapesWhitelist:
        return "use a package from list_library_circuits; paths outside the library are refused";
    case ErrorCode::MalformedRow:
    case ErrorCode::NonFiniteValue:
        return "send two numeric columns (index, multiplier) with finite values";
    case ErrorCode::LimitsInverted:
        return "lower_pu must be below upper_pu";
    case ErrorCode::UnknownFormat:
        return "use format csv or json";
    case ErrorCode::NoConvergence:
        return "reduce the load or undo the last change, then solve again";
    case ErrorCode::InvalidArgument:
        return "check the arguments of " + tool + " against its schema and retry";
    case ErrorCode::UnknownSkill:
        return "use voltage_violation_analysis, capacitor_placement or overvoltage_mitigation";
    case ErrorCode::SyntaxError:
    case ErrorCode::ParseError:
    case ErrorCode::UndefinedLineCode:
    case ErrorCode::UnresolvedRedirect:
    case ErrorCode::NonRadialCircuit:
        return "the circuit package is invalid; fix the DSS files or load another package";
    default:
        return "check the arguments of " + tool + " and the circuit state, then retry";
    }
}

pf::Circuit& Engine::State::require_circuit()
{
    if (!circuit) {
        throw ToolFailure(ErrorCode::NoCircuitLoaded, "no circuit loaded",
                          "load the circuit first with load_library_circuit or load_circuit");
    }
    return *circuit;
}

const pf::SolveResult& Engine::State::require_solution()
{
    require_circuit();
    if (!solution) {
        throw ToolFailure(ErrorCode::UnsolvedCircuit, "the circuit has not been solved since the last change",
                          "call solve_power_flow first");
    }
    return *solution;
}

} // namespace gridmcp::mcp
