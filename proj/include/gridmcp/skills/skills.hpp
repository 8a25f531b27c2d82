#pragma once

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gridmcp::skills {

/// Calls one tool and returns its envelope as JSON. This callback is the only
/// way a skill reaches the engine.
using ToolInvoker = std::function<nlohmann::json(const std::string& tool, const nlohmann::json& args)>;

struct Progress {
    std::string skill;
    std::string phase;
    std::size_t iteration = 0;
    std::size_t total = 0;
};
using ProgressSink = std::function<void(const Progress&)>;

struct ToolCallRecord {
    std::string tool;
    nlohmann::json args;
    std::string digest; // envelope digest
    bool success = false;
};

struct Metrics {
    std::size_t violation_count = 0;
    std::size_t under_count = 0;
    std::size_t over_count = 0;
    double min_voltage = 0.0;
    double max_voltage = 0.0;
    double loss_kw = 0.0;
};

enum class SkillStatus { Completed, Failed, Partial };
std::string_view to_string(SkillStatus s) noexcept;

struct SkillError {
    std::string code;
    std::string message;
    std::string hint;
};

struct SkillReport {
    std::string skill;
    SkillStatus status = SkillStatus::Failed;
    std::vector<ToolCallRecord> tool_calls;
    std::optional<Metrics> metrics_before;
    std::optional<Metrics> metrics_after;
    std::vector<std::string> recommendations;
    std::size_t iterations = 0;
    nlohmann::json details = nlohmann::json::object();
    std::optional<SkillError> error;
};

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const SkillReport& r);

inline constexpr const char* kViolationAnalysis = "voltage_violation_analysis";
inline constexpr const char* kCapacitorPlacement = "capacitor_placement";
inline constexpr const char* kOvervoltageMitigation = "overvoltage_mitigation";

const std::vector<std::string>& skill_names();

// Violation classification

enum class Severity { Severe, Moderate, Minor };
std::string_view to_string(Severity s) noexcept;

/// |V - 1| in percent: > 3 severe, [2, 3] moderate, below 2 minor.
Severity classify_deviation(double deviation_pct);

struct ClassifiedBus {
    std::string bus;
    double voltage = 0.0;
    bool under = false;
    double deviation_pct = 0.0;
    Severity severity = Severity::Minor;
    std::string note; // root-cause text
};

/// Buses outside [lower, upper], severe first, then by deviation (largest
/// first), then by name. Notes are left empty.
std::vector<ClassifiedBus> classify_violations(const std::map<std::string, double>& voltages, double lower = 0.95,
                                               double upper = 1.05);

// Reactor sizing

/// (v_actual^2 - v_target^2) / x in p.u. Throws NonPositiveReactance and
/// NoOvervoltage.
double size_reactor(double v_actual, double v_target, double x);

// PSO over (bus, kvar level) pairs

struct PsoConfig {
    std::size_t swarm_size = 12;
    std::size_t iterations = 30;
    double inertia = 0.7;
    double cognitive = 1.5;
    double social = 1.5;
    std::vector<double> kvar_levels{150.0, 300.0, 450.0, 600.0};
    std::uint64_t seed = 42;
    double lower = 0.95;
    double upper = 1.05;
};

/// Lexicographic: undervoltage count, then losses, then added kvar, then
/// candidate index.
struct Objective {
    std::size_t undervoltage = 0;
    double loss_kw = 0.0;
    double kvar = 0.0;
    std::size_t bus_index = 0;
    bool operator<(const Objective& o) const;
    bool operator==(const Objective& o) const = default;
};

struct PsoOutcome {
    std::size_t bus_index = 0;
    std::size_t level_index = 0;
    Objective best;
    std::vector<Objective> history; // global best after initialisation and after each iteration
    std::size_t evaluations = 0;    // distinct placements evaluated
};

using PlacementEvaluator = std::function<Objective(std::size_t bus_index, std::size_t level_index)>;

/// Each placement is evaluated at most once. Throws InvalidArgument on an
/// empty search space or bad hyperparameters.
PsoOutcome run_pso(std::size_t bus_count, const PsoConfig& config, const PlacementEvaluator& evaluate,
                   const ProgressSink& progress = nullptr);

// Overvoltage mitigation

struct MitigationConfig {
    double lower = 0.95;
    double upper = 1.05;
    double harm_slack = 0.005;         // no new bus below lower - slack
    double max_reactor_kvar = 3000.0;  // total budget for added reactors
    std::size_t max_reactors = 3;
};

struct AnalysisConfig {
    double lower = 0.95;
    double upper = 1.05;
};

PsoConfig pso_config_from_json(const nlohmann::json& j);
MitigationConfig mitigation_config_from_json(const nlohmann::json& j);
AnalysisConfig analysis_config_from_json(const nlohmann::json& j);

SkillReport run_violation_analysis(const ToolInvoker& tools, const AnalysisConfig& config,
                                   const ProgressSink& progress = nullptr);
SkillReport run_capacitor_placement(const ToolInvoker& tools, const PsoConfig& config,
                                    const ProgressSink& progress = nullptr);
SkillReport run_overvoltage_mitigation(const ToolInvoker& tools, const MitigationConfig& config,
                                       const ProgressSink& progress = nullptr);

/// Runs a skill by name with a JSON config. Throws UnknownSkill and
/// InvalidArgument (bad config); everything else ends up in the report.
SkillReport run_skill(const std::string& name, const nlohmann::json& config, const ToolInvoker& tools,
                      const ProgressSink& progress = nullptr);

struct SkillSuggestion {
    std::string skill;
    std::string reason;
};

/// Rule-based ranking from the current voltages: overvoltage puts mitigation
/// first, undervoltage puts capacitor placement first, otherwise analysis only.
std::vector<SkillSuggestion> recommend_skills(const std::map<std::string, double>& voltages, double lower = 0.95,
                                              double upper = 1.05);

} // namespace gridmcp::skills
