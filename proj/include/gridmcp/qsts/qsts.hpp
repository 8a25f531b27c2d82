#pragma once

#include "gridmcp/pfcore/circuit.hpp"
#include "gridmcp/pfcore/solver.hpp"
#include "gridmcp/shapes/loadshape.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gridmcp::qsts {

enum class ViolationKind { Under, Over };

std::string_view to_string(ViolationKind kind) noexcept;

struct Limits {
    double lower = 0.95;
    double upper = 1.05;
};

struct Violation {
    std::size_t step = 0;
    std::string bus;
    double voltage = 0.0;
    ViolationKind kind = ViolationKind::Under;
    bool operator==(const Violation&) const = default;
};

struct Extreme {
    double per_unit = 0.0;
    std::size_t step = 0;
    std::string bus;
    bool operator==(const Extreme&) const = default;
};

struct Summary {
    Extreme min_voltage;
    Extreme max_voltage;
    std::size_t violation_step_count = 0;
    std::size_t violation_count = 0;
    double energy_loss_kwh = 0.0;
    double energy_loss_kvarh = 0.0;
    bool operator==(const Summary&) const = default;
};

struct QstsResult {
    std::string circuit;
    std::size_t requested_steps = 0;
    double step_hours = 1.0;
    Limits limits;
    std::vector<std::string> buses;                  // column order of `voltages`
    std::vector<std::vector<double>> voltages;       // [step][bus], positive-sequence p.u.
    std::vector<double> loss_kw;                     // per step
    std::vector<double> loss_kvar;                   // per step
    std::vector<Violation> violations;               // step-major, bus order within a step
    Summary summary;
    std::optional<std::size_t> diverged_at;          // first step that failed to converge

    std::size_t steps() const { return voltages.size(); }
    bool operator==(const QstsResult& o) const;
};

/// Looks up a shape by name; nullopt when it does not exist.
using ShapeLookup = std::function<std::optional<shapes::LoadShape>(const std::string& name)>;

/// Multiplier applied to a load at `step`: the shape value at the elapsed
/// time, wrapping over the shape length.
double shape_multiplier(const shapes::LoadShape& shape, std::size_t step, double step_hours);

/// Runs one snapshot solve per step with every shaped load scaled by its
/// multiplier; unshaped loads stay at 1.0. Equipment is not touched. A
/// non-converging step truncates the result and sets diverged_at.
/// Throws InvalidArgument (steps == 0, bad step_hours), UnknownShape,
/// LimitsInverted.
QstsResult run_qsts(const pf::Circuit& circuit, std::size_t steps, double step_hours, const ShapeLookup& shapes,
                    Limits limits = {}, const pf::SolveOptions& options = {});

/// Buses strictly outside [lower, upper], in map order. Throws LimitsInverted.
std::vector<Violation> detect_violations(const std::map<std::string, double>& voltages, Limits limits = {},
                                         std::size_t step = 0);

/// Recomputes the summary from the step matrix, losses and violations.
Summary summarize(const QstsResult& result);

/// "csv" or "json"; throws UnknownFormat.
std::string export_results(const QstsResult& result, std::string_view format);

nlohmann::json to_json(const QstsResult& result);
QstsResult result_from_json(const nlohmann::json& j);

/// Self-contained HTML page with the summary KPIs and the violation table.
std::string generate_report(const QstsResult& result);

} // namespace gridmcp::qsts
