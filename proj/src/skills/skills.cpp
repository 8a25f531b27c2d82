#include "gridmcp/skills/skills.hpp"

#include "gridmcp/error.hpp"
#include "gridmcp/mcp/envelope.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace gridmcp::skills {

using nlohmann::json;

std::string_view to_string(SkillStatus s) noexcept
{
    switch (s) {
    case SkillStatus::Completed: return "completed";
    case SkillStatus::Failed: return "failed";
    case SkillStatus::Partial: return "partial";
    }
    return "failed";
}

std::string_view to_string(Severity s) noexcept
{
    switch (s) {
    case Severity::Severe: return "severe";
    case Severity::Moderate: return "moderate";
    case Severity::Minor: return "minor";
    }
    return "minor";
}

const std::vector<std::string>& skill_names()
{
    static const std::vector<std::string> names{kViolationAnalysis, kCapacitorPlacement, kOvervoltageMitigation};
    return names;
}

json to_json(const Metrics& m)
{
    return {{"violation_count", m.violation_count}, {"under_count", m.under_count}, {"over_count", m.over_count},
            {"min_voltage", m.min_voltage},         {"max_voltage", m.max_voltage}, {"loss_kw", m.loss_kw}};
}

json to_json(const SkillReport& r)
{
    json calls = json::array();
    for (const auto& c : r.tool_calls) {
        calls.push_back({{"tool", c.tool}, {"args", c.args}, {"digest", c.digest}, {"success", c.success}});
    }
    json j = {{"skill", r.skill},
              {"status", to_string(r.status)},
              {"tool_calls", std::move(calls)},
              {"metrics_before", r.metrics_before ? to_json(*r.metrics_before) : json(nullptr)},
              {"metrics_after", r.metrics_after ? to_json(*r.metrics_after) : json(nullptr)},
              {"recommendations", r.recommendations},
              {"iterations", r.iterations},
              {"details", r.details}};
    if (r.error) {
        j["error"] = {{"code", r.error->code}, {"message", r.error->message}, {"hint", r.error->hint}};
    }
    return j;
}

Severity classify_deviation(double deviation_pct)
{
    if (deviation_pct > 3.0) {
        return Severity::Severe;
    }
    if (deviation_pct >= 2.0) {
        return Severity::Moderate;
    }
    return Severity::Minor;
}

std::vector<ClassifiedBus> classify_violations(const std::map<std::string, double>& voltages, double lower,
                                               double upper)
{
    if (lower >= upper) {
        throw Error(ErrorCode::LimitsInverted, "lower limit must be below upper limit");
    }
    std::vector<ClassifiedBus> out;
    for (const auto& [bus, v] : voltages) {
        if (v >= lower && v <= upper) {
            continue;
        }
        ClassifiedBus c;
        c.bus = bus;
        c.voltage = v;
        c.under = v < lower;
        c.deviation_pct = std::abs(v - 1.0) * 100.0;
        c.severity = classify_deviation(c.deviation_pct);
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const ClassifiedBus& a, const ClassifiedBus& b) {
        if (a.severity != b.severity) {
            return a.severity < b.severity;
        }
        if (a.deviation_pct != b.deviation_pct) {
            return a.deviation_pct > b.deviation_pct;
        }
        return a.bus < b.bus;
    });
    return out;
}

double size_reactor(double v_actual, double v_target, double x)
{
    if (!(x > 0.0)) {
        throw Error(ErrorCode::NonPositiveReactance, "path reactance must be positive");
    }
    if (!(v_actual > v_target)) {
        throw Error(ErrorCode::NoOvervoltage, "voltage is not above the target");
    }
    return (v_actual * v_actual - v_target * v_target) / x;
}

bool Objective::operator<(const Objective& o) const
{
    if (undervoltage != o.undervoltage) {
        return undervoltage < o.undervoltage;
    }
    if (loss_kw != o.loss_kw) {
        return loss_kw < o.loss_kw;
    }
    if (kvar != o.kvar) {
        return kvar < o.kvar;
    }
    return bus_index < o.bus_index;
}

namespace {
constexpr std::size_t kStallLimit = 2; // iterations without a personal-best gain
}

PsoOutcome run_pso(std::size_t bus_count, const PsoConfig& config, const PlacementEvaluator& evaluate,
                   const ProgressSink& progress)
{
    const std::size_t level_count = config.kvar_levels.size();
    if (bus_count == 0 || level_count == 0) {
        throw Error(ErrorCode::InvalidArgument, "empty search space");
    }
    if (config.swarm_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "swarm_size must be positive");
    }
    if (!std::isfinite(config.inertia) || !std::isfinite(config.cognitive) || !std::isfinite(config.social)) {
        throw Error(ErrorCode::InvalidArgument, "PSO coefficients must be finite");
    }

    // Each discrete index i owns [i - 0.5, i + 0.5], so edge cells are as wide as inner ones.
    const std::array<std::size_t, 2> top{bus_count - 1, level_count - 1};
    const std::array<double, 2> lo{-0.5, -0.5};
    const std::array<double, 2> hi{static_cast<double>(bus_count) - 0.5, static_cast<double>(level_count) - 0.5};
    const std::array<double, 2> vmax{std::max(1.0, hi[0] - lo[0] - 1.0), std::max(1.0, hi[1] - lo[1] - 1.0)};

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::map<std::pair<std::size_t, std::size_t>, Objective> cache;
    PsoOutcome out;
    auto snap = [&](const std::array<double, 2>& x) {
        auto index = [&](std::size_t d) {
            return static_cast<std::size_t>(std::clamp<long>(std::lround(x[d]), 0, static_cast<long>(top[d])));
        };
        return std::pair<std::size_t, std::size_t>{index(0), index(1)};
    };
    auto score = [&](std::pair<std::size_t, std::size_t> key) {
        auto it = cache.find(key);
        if (it == cache.end()) {
            it = cache.emplace(key, evaluate(key.first, key.second)).first;
            ++out.evaluations;
        }
        return it->second;
    };

    struct Particle {
        std::array<double, 2> x{};
        std::array<double, 2> v{};
        std::array<double, 2> best_x{};
        Objective best;
        std::size_t stalled = 0;
    };
    std::vector<Particle> swarm(config.swarm_size);
    std::array<double, 2> gbest_x{};
    std::optional<Objective> gbest;

    auto scatter = [&](Particle& p) {
        for (std::size_t d = 0; d < 2; ++d) {
            p.x[d] = lo[d] + unit(rng) * (hi[d] - lo[d]);
            p.v[d] = (2.0 * unit(rng) - 1.0) * vmax[d];
        }
    };
    for (auto& p : swarm) {
        scatter(p);
        p.best_x = p.x;
        p.best = score(snap(p.x));
        if (!gbest || p.best < *gbest) {
            gbest = p.best;
            gbest_x = p.x;
        }
    }
    out.history.push_back(*gbest);

    for (std::size_t it = 0; it < config.iterations; ++it) {
        for (auto& p : swarm) {
            for (std::size_t d = 0; d < 2; ++d) {
                const double r1 = unit(rng);
                const double r2 = unit(rng);
                p.v[d] = config.inertia * p.v[d] + config.cognitive * r1 * (p.best_x[d] - p.x[d])
                         + config.social * r2 * (gbest_x[d] - p.x[d]);
                p.v[d] = std::clamp(p.v[d], -vmax[d], vmax[d]);
                p.x[d] = std::clamp(p.x[d] + p.v[d], lo[d], hi[d]);
            }
            const auto obj = score(snap(p.x));
            if (obj < p.best) {
                p.best = obj;
                p.best_x = p.x;
                p.stalled = 0;
            } else if (++p.stalled >= kStallLimit) {
                // Re-seed a stagnant particle; its personal best is kept.
                scatter(p);
                p.stalled = 0;
                const auto fresh = score(snap(p.x));
                if (fresh < p.best) {
                    p.best = fresh;
                    p.best_x = p.x;
                }
                if (fresh < *gbest) {
                    gbest = fresh;
                    gbest_x = p.x;
                }
            }
            if (obj < *gbest) {
                gbest = obj;
                gbest_x = p.x;
            }
        }
        out.history.push_back(*gbest);
        if (progress) {
            progress({kCapacitorPlacement, "pso", it + 1, config.iterations});
        }
    }

    const auto key = snap(gbest_x);
    out.bus_index = key.first;
    out.level_index = key.second;
    out.best = *gbest;
    return out;
}

namespace {

struct SkillAbort {
    SkillError error;
    SkillStatus status = SkillStatus::Failed;
};

template <typename T>
T config_value(const json& j, const char* key, T fallback)
{
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("config '{}' has the wrong type", key));
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys)
{
    if (j.is_null()) {
        return;
    }
    if (!j.is_object()) {
        throw Error(ErrorCode::InvalidArgument, "skill config must be an object");
    }
    for (const auto& [k, v] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* name) { return k == name; })) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("unknown config key '{}'", k));
        }
    }
}

void check_limits(double lower, double upper)
{
    if (!(lower < upper)) {
        throw Error(ErrorCode::LimitsInverted, "lower limit must be below upper limit");
    }
}

/// Records every tool call made by one skill run.
class Session {
public:
    Session(const ToolInvoker& tools, SkillReport& report) : tools_(tools), report_(report) {}

    json call(const std::string& tool, json args = json::object())
    {
        json env = tools_(tool, args);
        report_.tool_calls.push_back({tool, std::move(args), mcp::envelope_digest(env), env.value("success", false)});
        return env;
    }

    json require(const std::string& tool, json args = json::object())
    {
        json env = call(tool, std::move(args));
        if (!env.value("success", false)) {
            throw SkillAbort{failure_of(env, tool)};
        }
        return env.at("data");
    }

    static SkillError failure_of(const json& env, const std::string& tool)
    {
        SkillError e;
        const auto& data = env.contains("data") ? env["data"] : json::object();
        if (data.contains("error")) {
            e.code = data["error"].value("code", "InvalidArgument");
            e.message = fmt::format("{}: {}", tool, data["error"].value("message", ""));
        } else {
            e.code = "InvalidArgument";
            e.message = tool + " failed";
        }
        e.hint = env.value("hint", "");
        return e;
    }

private:
    const ToolInvoker& tools_;
    SkillReport& report_;
};

struct Snapshot {
    std::map<std::string, double> voltages;
    double loss_kw = 0.0;
    bool converged = true;
};

Metrics metrics_of(const Snapshot& s, double lower, double upper)
{
    Metrics m;
    m.min_voltage = std::numeric_limits<double>::infinity();
    m.max_voltage = -std::numeric_limits<double>::infinity();
    for (const auto& [bus, v] : s.voltages) {
        m.min_voltage = std::min(m.min_voltage, v);
        m.max_voltage = std::max(m.max_voltage, v);
        m.under_count += v < lower ? 1 : 0;
        m.over_count += v > upper ? 1 : 0;
    }
    if (s.voltages.empty()) {
        m.min_voltage = m.max_voltage = 0.0;
    }
    m.violation_count = m.under_count + m.over_count;
    m.loss_kw = s.loss_kw;
    return m;
}

Snapshot read_voltages(const json& data)
{
    Snapshot s;
    for (const auto& [bus, entry] : data.at("voltages").items()) {
        s.voltages[bus] = entry.at("per_unit").get<double>();
    }
    s.loss_kw = data.at("losses").at("kw").get<double>();
    return s;
}

/// Solves and reads every bus voltage. A non-converged solve yields a
/// snapshot with converged == false instead of aborting.
Snapshot solve_and_read(Session& s)
{
    json env = s.call("solve_power_flow");
    if (!env.value("success", false)) {
        const auto& data = env["data"];
        if (data.contains("converged") && !data["converged"].get<bool>()) {
            Snapshot bad;
            bad.converged = false;
            return bad;
        }
        throw SkillAbort{Session::failure_of(env, "solve_power_flow")};
    }
    return read_voltages(s.require("get_all_bus_voltages"));
}

/// Radial structure as seen through get_topology and get_circuit_info.
struct Network {
    std::string source;
    double base_kva = 0.0;
    std::vector<std::string> buses;
    std::map<std::string, std::string> parent;
    std::map<std::string, std::vector<std::string>> children;
    std::map<std::string, std::pair<double, double>> edge_z; // keyed by to-bus: r1, x1 (p.u.)
    std::map<std::string, double> bus_load_kw;

    std::vector<std::string> path(const std::string& bus) const
    {
        std::vector<std::string> out{bus};
        for (auto it = parent.find(bus); it != parent.end(); it = parent.find(it->second)) {
            out.push_back(it->second);
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    std::vector<std::string> subtree(const std::string& bus) const
    {
        std::vector<std::string> out{bus};
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (auto it = children.find(out[i]); it != children.end()) {
                out.insert(out.end(), it->second.begin(), it->second.end());
            }
        }
        return out;
    }

    double path_reactance(const std::string& bus) const
    {
        double x = 0.0;
        for (const auto& b : path(bus)) {
            if (auto it = edge_z.find(b); it != edge_z.end()) {
                x += it->second.second;
            }
        }
        return x;
    }

    double path_impedance(const std::string& bus) const
    {
        double z = 0.0;
        for (const auto& b : path(bus)) {
            if (auto it = edge_z.find(b); it != edge_z.end()) {
                z += std::hypot(it->second.first, it->second.second);
            }
        }
        return z;
    }

    double downstream_kw(const std::string& bus) const
    {
        double kw = 0.0;
        for (const auto& b : subtree(bus)) {
            if (auto it = bus_load_kw.find(b); it != bus_load_kw.end()) {
                kw += it->second;
            }
        }
        return kw;
    }

    double total_kw() const
    {
        double kw = 0.0;
        for (const auto& [b, v] : bus_load_kw) {
            kw += v;
        }
        return kw;
    }
};

Network read_network(const json& info, const json& topo)
{
    Network n;
    n.source = info.at("source_bus").get<std::string>();
    n.base_kva = info.at("base_kva").get<double>();
    for (const auto& node : topo.at("nodes")) {
        n.buses.push_back(node.at("bus").get<std::string>());
    }
    for (const auto& e : topo.at("edges")) {
        const auto from = e.at("from").get<std::string>();
        const auto to = e.at("to").get<std::string>();
        n.parent[to] = from;
        n.children[from].push_back(to);
        n.edge_z[to] = {e.at("r1_pu").get<double>(), e.at("x1_pu").get<double>()};
    }
    for (const auto& load : info.at("loads")) {
        n.bus_load_kw[load.at("bus").get<std::string>()] += load.at("kw").get<double>();
    }
    return n;
}

Network fetch_network(Session& s)
{
    const json info = s.require("get_circuit_info");
    const json topo = s.require("get_topology");
    return read_network(info, topo);
}

struct RegulatorInfo {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    std::map<std::string, int> taps; // phase letter -> tap
};

std::vector<RegulatorInfo> read_regulators(const json& data)
{
    std::vector<RegulatorInfo> out;
    for (const auto& r : data.at("regulators")) {
        RegulatorInfo info;
        info.id = r.at("id").get<std::string>();
        info.from_bus = r.at("from_bus").get<std::string>();
        info.to_bus = r.at("to_bus").get<std::string>();
        for (const auto& [p, t] : r.at("taps").items()) {
            info.taps[p] = t.get<int>();
        }
        out.push_back(std::move(info));
    }
    return out;
}

struct BankInfo {
    std::string id;
    std::string bus;
    std::string phases;
    double kvar = 0.0;
};

std::vector<BankInfo> read_banks(const json& list, const char* key)
{
    std::vector<BankInfo> out;
    for (const auto& c : list.at(key)) {
        out.push_back({c.at("id").get<std::string>(), c.at("bus").get<std::string>(),
                       c.at("phases").get<std::string>(), c.at("kvar").get<double>()});
    }
    return out;
}

std::string fmt_pu(double v) { return fmt::format("{:.4f} p.u.", v); }

template <typename Fn>
SkillReport guarded(const std::string& name, Fn&& body)
{
    SkillReport report;
    report.skill = name;
    try {
        body(report);
    } catch (const SkillAbort& abort) {
        report.status = abort.status;
        report.error = abort.error;
    } catch (const Error& e) {
        report.status = SkillStatus::Failed;
        report.error = SkillError{std::string(to_string(e.code())), e.what(), "check the circuit state and retry"};
    } catch (const json::exception& e) {
        report.status = SkillStatus::Failed;
        report.error = SkillError{"InvalidArgument", std::string("unexpected tool data: ") + e.what(),
                                  "the tool server returned data in an unexpected shape"};
    }
    return report;
}

// voltage_violation_analysis

std::string root_cause(const ClassifiedBus& c, const Network& net, const std::vector<RegulatorInfo>& regs,
                       const std::vector<BankInfo>& caps)
{
    std::vector<std::pair<double, std::string>> distance;
    for (const auto& b : net.buses) {
        distance.emplace_back(net.path_impedance(b), b);
    }
    std::sort(distance.begin(), distance.end(), std::greater<>());
    std::size_t rank = 1;
    for (; rank <= distance.size() && distance[rank - 1].second != c.bus; ++rank) {
    }
    const double z = net.path_impedance(c.bus);
    const double kw = net.downstream_kw(c.bus);
    const double total = net.total_kw();
    std::string note = fmt::format("electrical distance {:.4f} p.u. from the source (rank {} of {} by distance)", z,
                                   rank, distance.size());
    note += fmt::format("; {:.0f} kW at or below this bus", kw);
    if (total > 0.0) {
        note += fmt::format(" ({:.0f}% of feeder load)", 100.0 * kw / total);
    }
    const auto path = net.path(c.bus);
    const std::set<std::string> on_path(path.begin(), path.end());
    for (const auto& r : regs) {
        if (on_path.count(r.to_bus) != 0) {
            std::string taps;
            for (const auto& [p, t] : r.taps) {
                taps += fmt::format("{}{}={}", taps.empty() ? "" : " ", p, t);
            }
            note += fmt::format("; upstream regulator {} at taps {}", r.id, taps);
        }
    }
    if (!c.under) {
        const auto below = net.subtree(c.bus);
        const std::set<std::string> local(below.begin(), below.end());
        for (const auto& cap : caps) {
            if (local.count(cap.bus) != 0 || cap.bus == c.bus) {
                note += fmt::format("; capacitor {} ({:.0f} kvar) at bus {}", cap.id, cap.kvar, cap.bus);
            }
        }
    }
    return note;
}

std::string remedy(const ClassifiedBus& c, const Network& net, const std::vector<RegulatorInfo>& regs,
                   const std::vector<BankInfo>& caps)
{
    const auto path = net.path(c.bus);
    const std::set<std::string> on_path(path.begin(), path.end());
    std::vector<std::string> upstream;
    for (const auto& r : regs) {
        if (on_path.count(r.to_bus) != 0) {
            upstream.push_back(r.id);
        }
    }
    std::string text = fmt::format("Bus {} ({}, {} {}voltage): ", c.bus, fmt_pu(c.voltage), to_string(c.severity),
                                   c.under ? "under" : "over");
    if (c.under) {
        text += fmt::format("add a capacitor at or upstream of {}", c.bus);
        if (!upstream.empty()) {
            text += fmt::format(" or raise the taps of {}", fmt::join(upstream, ", "));
        }
    } else {
        std::vector<std::string> parts;
        if (!upstream.empty()) {
            parts.push_back(fmt::format("lower the taps of {}", fmt::join(upstream, ", ")));
        }
        parts.push_back(fmt::format("add a shunt reactor at {}", c.bus));
        const auto below = net.subtree(c.bus);
        const std::set<std::string> local(below.begin(), below.end());
        for (const auto& cap : caps) {
            if (local.count(cap.bus) != 0) {
                parts.push_back(fmt::format("remove capacitor {}", cap.id));
            }
        }
        text += fmt::format("{}", fmt::join(parts, ", or "));
    }
    return text;
}

// overvoltage_mitigation helpers

bool creates_harm(const Snapshot& before, const Snapshot& after, const MitigationConfig& cfg)
{
    if (!after.converged) {
        return true;
    }
    const double floor = cfg.lower - cfg.harm_slack;
    for (const auto& [bus, v] : after.voltages) {
        auto it = before.voltages.find(bus);
        const double prev = it == before.voltages.end() ? 1.0 : it->second;
        if (v < floor && prev >= floor) {
            return true;
        }
    }
    return false;
}

std::vector<std::string> over_buses(const Snapshot& s, double upper)
{
    std::vector<std::string> out;
    for (const auto& [bus, v] : s.voltages) {
        if (v > upper) {
            out.push_back(bus);
        }
    }
    return out;
}

} // namespace

PsoConfig pso_config_from_json(const json& j)
{
    reject_unknown(j, {"swarm_size", "iterations", "inertia", "cognitive", "social", "kvar_levels", "seed", "lower_pu",
                       "upper_pu"});
    PsoConfig c;
    if (j.is_null()) {
        return c;
    }
    c.swarm_size = config_value<std::size_t>(j, "swarm_size", c.swarm_size);
    c.iterations = config_value<std::size_t>(j, "iterations", c.iterations);
    c.inertia = config_value<double>(j, "inertia", c.inertia);
    c.cognitive = config_value<double>(j, "cognitive", c.cognitive);
    c.social = config_value<double>(j, "social", c.social);
    c.kvar_levels = config_value<std::vector<double>>(j, "kvar_levels", c.kvar_levels);
    c.seed = config_value<std::uint64_t>(j, "seed", c.seed);
    c.lower = config_value<double>(j, "lower_pu", c.lower);
    c.upper = config_value<double>(j, "upper_pu", c.upper);
    if (c.swarm_size == 0 || c.swarm_size > 1000 || c.iterations > 1000) {
        throw Error(ErrorCode::InvalidArgument, "swarm_size must be in 1..1000 and iterations in 0..1000");
    }
    if (c.kvar_levels.empty() || std::any_of(c.kvar_levels.begin(), c.kvar_levels.end(),
                                             [](double k) { return !(k > 0.0) || !std::isfinite(k); })) {
        throw Error(ErrorCode::InvalidArgument, "kvar_levels must be a non-empty list of positive values");
    }
    check_limits(c.lower, c.upper);
    return c;
}

MitigationConfig mitigation_config_from_json(const json& j)
{
    reject_unknown(j, {"lower_pu", "upper_pu", "harm_slack", "max_reactor_kvar", "max_reactors"});
    MitigationConfig c;
    if (j.is_null()) {
        return c;
    }
    c.lower = config_value<double>(j, "lower_pu", c.lower);
    c.upper = config_value<double>(j, "upper_pu", c.upper);
    c.harm_slack = config_value<double>(j, "harm_slack", c.harm_slack);
    c.max_reactor_kvar = config_value<double>(j, "max_reactor_kvar", c.max_reactor_kvar);
    c.max_reactors = config_value<std::size_t>(j, "max_reactors", c.max_reactors);
    if (c.harm_slack < 0.0 || c.max_reactor_kvar < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "harm_slack and max_reactor_kvar must be non-negative");
    }
    check_limits(c.lower, c.upper);
    return c;
}

AnalysisConfig analysis_config_from_json(const json& j)
{
    reject_unknown(j, {"lower_pu", "upper_pu"});
    AnalysisConfig c;
    if (j.is_null()) {
        return c;
    }
    c.lower = config_value<double>(j, "lower_pu", c.lower);
    c.upper = config_value<double>(j, "upper_pu", c.upper);
    check_limits(c.lower, c.upper);
    return c;
}

SkillReport run_violation_analysis(const ToolInvoker& tools, const AnalysisConfig& config,
                                   const ProgressSink& progress)
{
    return guarded(kViolationAnalysis, [&](SkillReport& report) {
        Session s(tools, report);
        json env = s.call("get_all_bus_voltages");
        if (!env.value("success", false)) {
            auto err = Session::failure_of(env, "get_all_bus_voltages");
            if (err.code == "UnsolvedCircuit" || err.code == "NoCircuitLoaded") {
                err.hint = err.code == "UnsolvedCircuit"
                               ? "call solve_power_flow before running voltage_violation_analysis"
                               : "load a circuit and call solve_power_flow first";
            }
            throw SkillAbort{err};
        }
        const Snapshot snap = read_voltages(env["data"]);
        if (progress) {
            progress({kViolationAnalysis, "voltages", 1, 3});
        }
        const Network net = fetch_network(s);
        const auto caps = read_banks(s.require("list_capacitors"), "capacitors");
        const auto regs = read_regulators(s.require("list_regulators"));
        if (progress) {
            progress({kViolationAnalysis, "topology", 2, 3});
        }

        auto classified = classify_violations(snap.voltages, config.lower, config.upper);
        json rows = json::array();
        std::map<std::string, std::size_t> counts{{"severe", 0}, {"moderate", 0}, {"minor", 0}};
        for (auto& c : classified) {
            c.note = root_cause(c, net, regs, caps);
            counts[std::string(to_string(c.severity))]++;
            rows.push_back({{"bus", c.bus},
                            {"voltage_pu", c.voltage},
                            {"kind", c.under ? "under" : "over"},
                            {"deviation_pct", c.deviation_pct},
                            {"severity", to_string(c.severity)},
                            {"electrical_distance_pu", net.path_impedance(c.bus)},
                            {"downstream_kw", net.downstream_kw(c.bus)},
                            {"root_cause", c.note}});
            report.recommendations.push_back(remedy(c, net, regs, caps));
        }
        if (classified.empty()) {
            report.recommendations.push_back(fmt::format("No action needed: every bus is within [{}, {}] p.u.",
                                                         config.lower, config.upper));
        }
        report.metrics_before = metrics_of(snap, config.lower, config.upper);
        report.metrics_after = report.metrics_before;
        report.details = {{"violations", std::move(rows)},
                          {"severity_counts", counts},
                          {"limits", {{"lower", config.lower}, {"upper", config.upper}}}};
        report.iterations = 1;
        report.status = SkillStatus::Completed;
        if (progress) {
            progress({kViolationAnalysis, "done", 3, 3});
        }
    });
}

SkillReport run_capacitor_placement(const ToolInvoker& tools, const PsoConfig& config, const ProgressSink& progress)
{
    return guarded(kCapacitorPlacement, [&](SkillReport& report) {
        Session s(tools, report);
        const Snapshot before = solve_and_read(s);
        if (!before.converged) {
            throw SkillAbort{{"NoConvergence", "the base case does not converge",
                              "reduce the load or check the circuit before placing capacitors"}};
        }
        const Metrics mb = metrics_of(before, config.lower, config.upper);
        report.metrics_before = mb;
        if (mb.under_count == 0) {
            throw SkillAbort{{"NoUndervoltage", "no bus is below the lower limit",
                              "capacitor placement only targets undervoltage; try voltage_violation_analysis"}};
        }
        const Network net = fetch_network(s);

        std::set<std::string> pool;
        for (const auto& [bus, v] : before.voltages) {
            if (v < config.lower) {
                for (const auto& b : net.path(bus)) {
                    pool.insert(b);
                }
            }
        }
        std::vector<std::string> candidates;
        for (const auto& b : pool) {
            auto it = before.voltages.find(b);
            if (b != net.source && it != before.voltages.end() && it->second <= config.upper) {
                candidates.push_back(b);
            }
        }
        if (candidates.empty()) {
            throw SkillAbort{{"NoCandidates", "no eligible candidate bus",
                              "every bus upstream of the violations is the source or already overvoltage"}};
        }

        const std::size_t worst = before.voltages.size() + 1;
        auto evaluate = [&](std::size_t b, std::size_t l) {
            const double kvar = config.kvar_levels[l];
            s.require("add_capacitor", {{"id", "pso_eval"}, {"bus", candidates[b]}, {"kvar", kvar}});
            Snapshot trial;
            try {
                trial = solve_and_read(s);
            } catch (...) {
                s.call("remove_capacitor", {{"id", "pso_eval"}});
                throw;
            }
            s.require("remove_capacitor", {{"id", "pso_eval"}});
            Objective o;
            o.bus_index = b;
            o.kvar = kvar;
            if (!trial.converged) {
                o.undervoltage = worst;
                o.loss_kw = std::numeric_limits<double>::infinity();
                return o;
            }
            o.undervoltage = metrics_of(trial, config.lower, config.upper).under_count;
            o.loss_kw = trial.loss_kw;
            return o;
        };
        const auto outcome = run_pso(candidates.size(), config, evaluate, progress);
        report.iterations = config.iterations;

        const std::string bus = candidates[outcome.bus_index];
        const double kvar = config.kvar_levels[outcome.level_index];
        std::set<std::string> taken;
        for (const auto& cap : read_banks(s.require("list_capacitors"), "capacitors")) {
            taken.insert(cap.id);
        }
        std::string id = "pso_cap_" + bus;
        for (int n = 2; taken.count(id) != 0; ++n) {
            id = fmt::format("pso_cap_{}_{}", bus, n);
        }
        s.require("add_capacitor", {{"id", id}, {"bus", bus}, {"kvar", kvar}});
        const Snapshot after = solve_and_read(s);
        if (!after.converged) {
            throw SkillAbort{{"NoConvergence", "verification solve did not converge",
                              fmt::format("remove capacitor {} and retry", id)}};
        }
        const Metrics ma = metrics_of(after, config.lower, config.upper);
        report.metrics_after = ma;

        json history = json::array();
        for (std::size_t i = 0; i < outcome.history.size(); ++i) {
            const auto& h = outcome.history[i];
            history.push_back({{"iteration", i},
                               {"undervoltage", h.undervoltage},
                               {"loss_kw", h.loss_kw},
                               {"kvar", h.kvar},
                               {"bus", candidates[h.bus_index]}});
        }
        const bool verified = ma.under_count == outcome.best.undervoltage
                              && std::abs(ma.loss_kw - outcome.best.loss_kw) <= 1e-9 * std::max(1.0, ma.loss_kw);
        report.details = {{"candidates", candidates},
                          {"evaluations", outcome.evaluations},
                          {"search_space", candidates.size() * config.kvar_levels.size()},
                          {"gbest_history", std::move(history)},
                          {"best", {{"bus", bus}, {"kvar", kvar}, {"capacitor_id", id},
                                    {"undervoltage", outcome.best.undervoltage}, {"loss_kw", outcome.best.loss_kw}}},
                          {"verified", verified},
                          {"seed", config.seed}};
        report.recommendations.push_back(
            fmt::format("Placed {:.0f} kvar at bus {} as {}: undervoltage buses {} -> {}, losses {:.2f} -> {:.2f} kW",
                        kvar, bus, id, mb.under_count, ma.under_count, mb.loss_kw, ma.loss_kw));
        if (ma.under_count > 0) {
            report.recommendations.push_back(fmt::format(
                "{} buses remain below {} p.u.; consider a second bank or raising regulator taps", ma.under_count,
                config.lower));
        }
        report.status = ma.under_count < mb.under_count ? SkillStatus::Completed : SkillStatus::Partial;
    });
}

SkillReport run_overvoltage_mitigation(const ToolInvoker& tools, const MitigationConfig& config,
                                       const ProgressSink& progress)
{
    return guarded(kOvervoltageMitigation, [&](SkillReport& report) {
        Session s(tools, report);
        Snapshot current = solve_and_read(s);
        if (!current.converged) {
            throw SkillAbort{{"NoConvergence", "the base case does not converge", "check the circuit before mitigating"}};
        }
        const Metrics mb = metrics_of(current, config.lower, config.upper);
        report.metrics_before = mb;
        json strategies = json::array();
        auto record = [&](const char* name, const char* status, json actions) {
            strategies.push_back({{"strategy", name},
                                  {"status", status},
                                  {"actions", std::move(actions)},
                                  {"over_count_after", over_buses(current, config.upper).size()},
                                  {"max_voltage_after", metrics_of(current, config.lower, config.upper).max_voltage}});
        };
        auto tick = [&](const char* phase) {
            ++report.iterations;
            if (progress) {
                progress({kOvervoltageMitigation, phase, report.iterations, 0});
            }
        };
        auto resolved = [&] { return over_buses(current, config.upper).empty(); };

        if (mb.over_count == 0) {
            report.details = {{"strategies", json::array()}};
            throw SkillAbort{{"NothingToMitigate", "no bus is above the upper limit",
                              "overvoltage mitigation only acts on buses above the upper limit"}};
        }
        const Network net = fetch_network(s);
        auto upstream_of_violations = [&](const std::string& to_bus) {
            for (const auto& bus : over_buses(current, config.upper)) {
                const auto p = net.path(bus);
                if (std::find(p.begin(), p.end(), to_bus) != p.end()) {
                    return true;
                }
            }
            return false;
        };

        // 1. Regulator taps, one step down per iteration.
        {
            json actions = json::array();
            const char* status = "not_needed";
            if (!resolved()) {
                auto regs = read_regulators(s.require("list_regulators"));
                std::vector<RegulatorInfo*> upstream;
                for (auto& r : regs) {
                    if (upstream_of_violations(r.to_bus)) {
                        upstream.push_back(&r);
                    }
                }
                status = upstream.empty() ? "unavailable" : "applied";
                while (!upstream.empty() && !resolved()) {
                    std::vector<std::tuple<RegulatorInfo*, std::string, int>> moved;
                    for (auto* r : upstream) {
                        for (auto& [phase, tap] : r->taps) {
                            if (tap > -16) {
                                s.require("set_tap_position",
                                          {{"regulator", r->id}, {"phase", phase}, {"tap", tap - 1}});
                                moved.emplace_back(r, phase, tap);
                                --tap;
                            }
                        }
                    }
                    if (moved.empty()) {
                        break;
                    }
                    tick("tap");
                    Snapshot next = solve_and_read(s);
                    if (creates_harm(current, next, config)) {
                        for (auto& [r, phase, tap] : moved) {
                            s.require("set_tap_position", {{"regulator", r->id}, {"phase", phase}, {"tap", tap}});
                            r->taps[phase] = tap;
                        }
                        current = solve_and_read(s);
                        status = "stopped_by_undervoltage_guard";
                        actions.push_back({{"action", "rollback"}, {"reason", "new undervoltage below guard"}});
                        break;
                    }
                    current = std::move(next);
                    json step = json::object();
                    for (auto* r : upstream) {
                        step[r->id] = r->taps;
                    }
                    actions.push_back({{"action", "lower_taps"}, {"taps", std::move(step)}});
                }
                if (actions.empty() && !upstream.empty()) {
                    status = "exhausted";
                }
            }
            record("tap", status, std::move(actions));
        }

        // 2. Shunt reactors sized from the path reactance.
        {
            json actions = json::array();
            const char* status = "not_needed";
            if (!resolved()) {
                status = config.max_reactor_kvar > 0.0 && config.max_reactors > 0 ? "applied" : "disabled";
                double used = 0.0;
                for (std::size_t n = 0; std::string_view(status) == "applied" && n < config.max_reactors && !resolved();
                     ++n) {
                    std::string worst;
                    double vmax = 0.0;
                    for (const auto& [bus, v] : current.voltages) {
                        if (v > config.upper && v > vmax) {
                            worst = bus;
                            vmax = v;
                        }
                    }
                    const double x = net.path_reactance(worst);
                    if (!(x > 0.0)) {
                        status = "no_path_reactance";
                        break;
                    }
                    const double target = config.upper - config.harm_slack;
                    const double kvar = std::min(size_reactor(vmax, target, x) * net.base_kva,
                                                 config.max_reactor_kvar - used);
                    if (kvar < 1.0) {
                        status = "budget_exhausted";
                        break;
                    }
                    const std::string id = fmt::format("mitig_reactor_{}", n + 1);
                    s.require("add_reactor", {{"id", id}, {"bus", worst}, {"kvar", kvar}});
                    tick("reactor");
                    Snapshot next = solve_and_read(s);
                    if (creates_harm(current, next, config)) {
                        s.require("remove_reactor", {{"id", id}});
                        current = solve_and_read(s);
                        status = "stopped_by_undervoltage_guard";
                        actions.push_back({{"action", "rollback"}, {"reactor", id}});
                        break;
                    }
                    used += kvar;
                    current = std::move(next);
                    actions.push_back({{"action", "add_reactor"},
                                       {"id", id},
                                       {"bus", worst},
                                       {"kvar", kvar},
                                       {"path_reactance_pu", x},
                                       {"voltage_before", vmax}});
                }
            }
            record("reactor", status, std::move(actions));
        }

        // 3. Remove capacitors at or below violating buses, largest first.
        {
            json actions = json::array();
            const char* status = "not_needed";
            if (!resolved()) {
                auto caps = read_banks(s.require("list_capacitors"), "capacitors");
                std::set<std::string> zone;
                for (const auto& bus : over_buses(current, config.upper)) {
                    for (const auto& b : net.subtree(bus)) {
                        zone.insert(b);
                    }
                }
                std::vector<BankInfo> eligible;
                for (const auto& c : caps) {
                    if (zone.count(c.bus) != 0) {
                        eligible.push_back(c);
                    }
                }
                std::sort(eligible.begin(), eligible.end(), [](const BankInfo& a, const BankInfo& b) {
                    return a.kvar != b.kvar ? a.kvar > b.kvar : a.id < b.id;
                });
                status = eligible.empty() ? "unavailable" : "applied";
                for (const auto& c : eligible) {
                    if (resolved()) {
                        break;
                    }
                    s.require("remove_capacitor", {{"id", c.id}});
                    tick("capacitor");
                    Snapshot next = solve_and_read(s);
                    if (creates_harm(current, next, config)) {
                        s.require("add_capacitor",
                                  {{"id", c.id}, {"bus", c.bus}, {"phases", c.phases}, {"kvar", c.kvar}});
                        current = solve_and_read(s);
                        actions.push_back({{"action", "rollback"}, {"capacitor", c.id}});
                        continue;
                    }
                    current = std::move(next);
                    actions.push_back({{"action", "remove_capacitor"}, {"id", c.id}, {"bus", c.bus}, {"kvar", c.kvar}});
                }
            }
            record("capacitor", status, std::move(actions));
        }

        const Metrics ma = metrics_of(current, config.lower, config.upper);
        report.metrics_after = ma;
        report.details = {{"strategies", strategies},
                          {"order", {"tap", "reactor", "capacitor"}},
                          {"limits", {{"lower", config.lower}, {"upper", config.upper}}}};
        for (const auto& st : strategies) {
            for (const auto& a : st["actions"]) {
                if (a["action"] == "add_reactor") {
                    report.recommendations.push_back(fmt::format("Added {:.1f} kvar reactor {} at bus {}",
                                                                 a["kvar"].get<double>(), a["id"].get<std::string>(),
                                                                 a["bus"].get<std::string>()));
                } else if (a["action"] == "remove_capacitor") {
                    report.recommendations.push_back(
                        fmt::format("Removed capacitor {} at bus {}", a["id"].get<std::string>(),
                                    a["bus"].get<std::string>()));
                }
            }
            if (st["strategy"] == "tap" && !st["actions"].empty()) {
                const auto& last = st["actions"].back();
                if (last["action"] == "lower_taps") {
                    report.recommendations.push_back(fmt::format("Lowered regulator taps to {}", last["taps"].dump()));
                }
            }
        }
        report.recommendations.push_back(fmt::format("Overvoltage buses {} -> {}, maximum {} -> {}", mb.over_count,
                                                     ma.over_count, fmt_pu(mb.max_voltage), fmt_pu(ma.max_voltage)));
        if (ma.over_count > 0) {
            throw SkillAbort{{"Unresolvable", fmt::format("{} buses remain above {} p.u.", ma.over_count, config.upper),
                              "raise max_reactor_kvar or review the regulator settings; applied changes were kept"},
                             SkillStatus::Partial};
        }
        report.status = SkillStatus::Completed;
    });
}

SkillReport run_skill(const std::string& name, const json& config, const ToolInvoker& tools,
                      const ProgressSink& progress)
{
    if (name == kViolationAnalysis) {
        return run_violation_analysis(tools, analysis_config_from_json(config), progress);
    }
    if (name == kCapacitorPlacement) {
        return run_capacitor_placement(tools, pso_config_from_json(config), progress);
    }
    if (name == kOvervoltageMitigation) {
        return run_overvoltage_mitigation(tools, mitigation_config_from_json(config), progress);
    }
    throw Error(ErrorCode::UnknownSkill, fmt::format("unknown skill '{}'", name));
}

std::vector<SkillSuggestion> recommend_skills(const std::map<std::string, double>& voltages, double lower,
                                              double upper)
{
    check_limits(lower, upper);
    std::size_t under = 0;
    std::size_t over = 0;
    for (const auto& [bus, v] : voltages) {
        under += v < lower ? 1 : 0;
        over += v > upper ? 1 : 0;
    }
    std::vector<SkillSuggestion> out;
    if (over > 0) {
        out.push_back({kOvervoltageMitigation, fmt::format("{} buses above {} p.u.", over, upper)});
    }
    if (under > 0) {
        out.push_back({kCapacitorPlacement, fmt::format("{} buses below {} p.u.", under, lower)});
    }
    out.push_back({kViolationAnalysis, over + under > 0 ? "classify the violations and their root causes"
                                                        : "no violations; confirm the voltage profile"});
    return out;
}

} // namespace gridmcp::skills
