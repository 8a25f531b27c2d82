#include "gridmcp/qsts/qsts.hpp"

#include "gridmcp/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gridmcp::qsts {

namespace {

void check_limits(const Limits& limits)
{
    if (!(limits.lower < limits.upper)) {
        throw Error(ErrorCode::LimitsInverted,
                    fmt::format("lower limit {} must be below upper limit {}", limits.lower, limits.upper));
    }
}

std::string html_escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

nlohmann::json extreme_json(const Extreme& e)
{
    return {{"per_unit", e.per_unit}, {"step", e.step}, {"bus", e.bus}};
}

Extreme extreme_from(const nlohmann::json& j)
{
    return Extreme{j.at("per_unit").get<double>(), j.at("step").get<std::size_t>(), j.at("bus").get<std::string>()};
}

} // namespace

std::string_view to_string(ViolationKind kind) noexcept { return kind == ViolationKind::Under ? "under" : "over"; }

bool QstsResult::operator==(const QstsResult& o) const
{
    return circuit == o.circuit && requested_steps == o.requested_steps && step_hours == o.step_hours &&
           limits.lower == o.limits.lower && limits.upper == o.limits.upper && buses == o.buses &&
           voltages == o.voltages && loss_kw == o.loss_kw && loss_kvar == o.loss_kvar && violations == o.violations &&
           summary == o.summary && diverged_at == o.diverged_at;
}

double shape_multiplier(const shapes::LoadShape& shape, std::size_t step, double step_hours)
{
    const double elapsed = static_cast<double>(step) * step_hours;
    // Small slack so 3 * (1/3) h lands on index 1 rather than 0.999...
    const auto index = static_cast<std::size_t>(std::floor(elapsed / shape.interval_hours + 1e-9));
    return shape.at(index);
}

std::vector<Violation> detect_violations(const std::map<std::string, double>& voltages, Limits limits,
                                         std::size_t step)
{
    check_limits(limits);
    std::vector<Violation> out;
    for (const auto& [bus, v] : voltages) {
        if (v < limits.lower) {
            out.push_back(Violation{step, bus, v, ViolationKind::Under});
        } else if (v > limits.upper) {
            out.push_back(Violation{step, bus, v, ViolationKind::Over});
        }
    }
    return out;
}

Summary summarize(const QstsResult& r)
{
    Summary s;
    bool first = true;
    for (std::size_t t = 0; t < r.voltages.size(); ++t) {
        for (std::size_t b = 0; b < r.buses.size(); ++b) {
            const double v = r.voltages[t][b];
            if (first || v < s.min_voltage.per_unit) {
                s.min_voltage = Extreme{v, t, r.buses[b]};
            }
            if (first || v > s.max_voltage.per_unit) {
                s.max_voltage = Extreme{v, t, r.buses[b]};
            }
            first = false;
        }
    }
    std::optional<std::size_t> last_step;
    for (const auto& v : r.violations) {
        if (last_step != v.step) {
            ++s.violation_step_count;
            last_step = v.step;
        }
    }
    s.violation_count = r.violations.size();
    for (std::size_t t = 0; t < r.loss_kw.size(); ++t) {
        s.energy_loss_kwh += r.loss_kw[t] * r.step_hours;
        s.energy_loss_kvarh += r.loss_kvar[t] * r.step_hours;
    }
    return s;
}

QstsResult run_qsts(const pf::Circuit& circuit, std::size_t steps, double step_hours, const ShapeLookup& shapes,
                    Limits limits, const pf::SolveOptions& options)
{
    if (steps == 0) {
        throw Error(ErrorCode::InvalidArgument, "steps must be at least 1");
    }
    if (!(step_hours > 0.0) || !std::isfinite(step_hours)) {
        throw Error(ErrorCode::InvalidArgument, "step_hours must be a positive number");
    }
    check_limits(limits);

    std::vector<std::optional<shapes::LoadShape>> load_shapes;
    for (const auto& load : circuit.loads) {
        if (!load.shape_ref) {
            load_shapes.emplace_back();
            continue;
        }
        auto shape = shapes ? shapes(*load.shape_ref) : std::nullopt;
        if (!shape) {
            throw Error(ErrorCode::UnknownShape,
                        "load '" + load.id + "' references unknown load shape '" + *load.shape_ref + "'");
        }
        load_shapes.push_back(std::move(shape));
    }

    QstsResult r;
    r.circuit = circuit.name;
    r.requested_steps = steps;
    r.step_hours = step_hours;
    r.limits = limits;
    for (const auto& bus : circuit.buses) {
        r.buses.push_back(bus.id);
    }
    std::sort(r.buses.begin(), r.buses.end());

    pf::Circuit scaled = circuit;
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < circuit.loads.size(); ++i) {
            const double m = load_shapes[i] ? shape_multiplier(*load_shapes[i], t, step_hours) : 1.0;
            scaled.loads[i].kw = circuit.loads[i].kw * m;
            scaled.loads[i].kvar = circuit.loads[i].kvar * m;
        }
        auto solved = pf::solve_power_flow(scaled, options);
        if (!solved.converged) {
            r.diverged_at = t;
            break;
        }
        auto profile = pf::positive_sequence_profile(solved);
        std::vector<double> row;
        row.reserve(r.buses.size());
        for (const auto& bus : r.buses) {
            row.push_back(profile.at(bus));
        }
        r.voltages.push_back(std::move(row));
        r.loss_kw.push_back(solved.total_loss_kw);
        r.loss_kvar.push_back(solved.total_loss_kvar);
        auto v = detect_violations(profile, limits, t);
        r.violations.insert(r.violations.end(), v.begin(), v.end());
    }
    r.summary = summarize(r);
    return r;
}

std::string export_results(const QstsResult& r, std::string_view format)
{
    if (format == "json") {
        return to_json(r).dump(2) + "\n";
    }
    if (format != "csv") {
        throw Error(ErrorCode::UnknownFormat, "unknown export format '" + std::string(format) + "'");
    }
    std::string out = "step,bus,voltage_pu\n";
    for (std::size_t t = 0; t < r.voltages.size(); ++t) {
        for (std::size_t b = 0; b < r.buses.size(); ++b) {
            out += fmt::format("{},{},{}\n", t, r.buses[b], r.voltages[t][b]);
        }
    }
    out += "\nstep,loss_kw,loss_kvar\n";
    for (std::size_t t = 0; t < r.loss_kw.size(); ++t) {
        out += fmt::format("{},{},{}\n", t, r.loss_kw[t], r.loss_kvar[t]);
    }
    return out;
}

nlohmann::json to_json(const QstsResult& r)
{
    auto violations = nlohmann::json::array();
    for (const auto& v : r.violations) {
        violations.push_back({{"step", v.step}, {"bus", v.bus}, {"voltage_pu", v.voltage}, {"kind", to_string(v.kind)}});
    }
    return {
        {"schema", "gridmcp.qsts_result/1"},
        {"circuit", r.circuit},
        {"requested_steps", r.requested_steps},
        {"steps", r.steps()},
        {"step_hours", r.step_hours},
        {"limits", {{"lower_pu", r.limits.lower}, {"upper_pu", r.limits.upper}}},
        {"buses", r.buses},
        {"voltages_pu", r.voltages},
        {"losses", {{"kw", r.loss_kw}, {"kvar", r.loss_kvar}}},
        {"violations", std::move(violations)},
        {"summary",
         {{"min_voltage", extreme_json(r.summary.min_voltage)},
          {"max_voltage", extreme_json(r.summary.max_voltage)},
          {"violation_step_count", r.summary.violation_step_count},
          {"violation_count", r.summary.violation_count},
          {"energy_loss_kwh", r.summary.energy_loss_kwh},
          {"energy_loss_kvarh", r.summary.energy_loss_kvarh}}},
        {"diverged_at", r.diverged_at ? nlohmann::json(*r.diverged_at) : nlohmann::json(nullptr)},
        {"units",
         {{"voltages_pu", "p.u. positive-sequence on bus base"},
          {"losses.kw", "kW"},
          {"losses.kvar", "kvar"},
          {"step_hours", "h"},
          {"energy_loss_kwh", "kWh"},
          {"energy_loss_kvarh", "kvarh"}}},
    };
}

QstsResult result_from_json(const nlohmann::json& j)
{
    QstsResult r;
    try {
        r.circuit = j.at("circuit").get<std::string>();
        r.requested_steps = j.at("requested_steps").get<std::size_t>();
        r.step_hours = j.at("step_hours").get<double>();
        r.limits = Limits{j.at("limits").at("lower_pu").get<double>(), j.at("limits").at("upper_pu").get<double>()};
        r.buses = j.at("buses").get<std::vector<std::string>>();
        r.voltages = j.at("voltages_pu").get<std::vector<std::vector<double>>>();
        r.loss_kw = j.at("losses").at("kw").get<std::vector<double>>();
        r.loss_kvar = j.at("losses").at("kvar").get<std::vector<double>>();
        for (const auto& v : j.at("violations")) {
            r.violations.push_back(Violation{v.at("step").get<std::size_t>(), v.at("bus").get<std::string>(),
                                             v.at("voltage_pu").get<double>(),
                                             v.at("kind") == "under" ? ViolationKind::Under : ViolationKind::Over});
        }
        const auto& s = j.at("summary");
        r.summary.min_voltage = extreme_from(s.at("min_voltage"));
        r.summary.max_voltage = extreme_from(s.at("max_voltage"));
        r.summary.violation_step_count = s.at("violation_step_count").get<std::size_t>();
        r.summary.violation_count = s.at("violation_count").get<std::size_t>();
        r.summary.energy_loss_kwh = s.at("energy_loss_kwh").get<double>();
        r.summary.energy_loss_kvarh = s.at("energy_loss_kvarh").get<double>();
        if (!j.at("diverged_at").is_null()) {
            r.diverged_at = j.at("diverged_at").get<std::size_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed QSTS result: ") + e.what());
    }
    return r;
}

std::string generate_report(const QstsResult& r)
{
    const auto& s = r.summary;
    std::string html = "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
    html += "<title>QSTS report - " + html_escape(r.circuit) + "</title>\n";
    html += "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
            "td,th{border:1px solid #999;padding:4px 8px}.under{color:#b00}.over{color:#c60}</style>\n";
    html += "</head>\n<body>\n<h1>QSTS report: " + html_escape(r.circuit) + "</h1>\n";
    html += "<h2>Summary</h2>\n<ul>\n";
    html += fmt::format("<li>Steps: {} of {} ({} h each)</li>\n", r.steps(), r.requested_steps, r.step_hours);
    html += fmt::format("<li>Minimum voltage: {:.4f} p.u. at bus {} (step {})</li>\n", s.min_voltage.per_unit,
                        html_escape(s.min_voltage.bus), s.min_voltage.step);
    html += fmt::format("<li>Maximum voltage: {:.4f} p.u. at bus {} (step {})</li>\n", s.max_voltage.per_unit,
                        html_escape(s.max_voltage.bus), s.max_voltage.step);
    html += fmt::format("<li>Limits: {:.2f} to {:.2f} p.u.</li>\n", r.limits.lower, r.limits.upper);
    html += fmt::format("<li>Violation steps: {}</li>\n", s.violation_step_count);
    html += fmt::format("<li>Energy losses: {:.2f} kWh, {:.2f} kvarh</li>\n", s.energy_loss_kwh, s.energy_loss_kvarh);
    if (r.diverged_at) {
        html += fmt::format("<li>Diverged at step {}</li>\n", *r.diverged_at);
    }
    html += "</ul>\n";
    html += fmt::format("<h2>Violations</h2>\n<p class=\"count\">{} violations</p>\n", s.violation_count);
    if (!r.violations.empty()) {
        html += "<table>\n<tr><th>Step</th><th>Bus</th><th>Voltage (p.u.)</th><th>Kind</th></tr>\n";
        for (const auto& v : r.violations) {
            html += fmt::format("<tr class=\"{0}\"><td>{1}</td><td>{2}</td><td>{3:.4f}</td><td>{0}</td></tr>\n",
                                to_string(v.kind), v.step, html_escape(v.bus), v.voltage);
        }
        html += "</table>\n";
    }
    html += "</body>\n</html>\n";
    return html;
}

} // namespace gridmcp::qsts
