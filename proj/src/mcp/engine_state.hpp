#pragma once

#include "gridmcp/dsspkg/package.hpp"
#include "gridmcp/error.hpp"
#include "gridmcp/mcp/engine.hpp"
#include "gridmcp/pfcore/solver.hpp"
#include "gridmcp/qsts/qsts.hpp"
#include "gridmcp/shapes/loadshape.hpp"

#include <json.hpp>

#include <mutex>
#include <set>

namespace gridmcp::mcp {

/// Failure with a tool-specific hint and extra data.
class ToolFailure : public Error {
public:
    ToolFailure(ErrorCode code, const std::string& message, std::string hint,
                nlohmann::json data = nlohmann::json::object())
        : Error(code, message), hint(std::move(hint)), data(std::move(data)) {}
    std::string hint;
    nlohmann::json data;
};

struct SkillProgress {
    bool running = false;
    std::string skill;
    std::string phase;
    std::size_t iteration = 0;
    std::size_t total = 0;
    std::size_t tool_calls = 0;
    std::string last_skill;
    std::string last_status;
};

struct Engine::State {
    EngineConfig config;
    std::optional<dss::LoadedPackage> package;
    std::optional<pf::Circuit> circuit;
    std::optional<pf::SolveResult> solution;
    shapes::ShapeRegistry shapes;
    std::set<std::string> uploaded_profiles;
    std::optional<qsts::QstsResult> qsts;
    std::function<void(const std::string&)> fault_injector;
    // Nested dispatch for skills; set by Engine.
    std::function<nlohmann::json(const std::string&, const nlohmann::json&)> dispatch;

    mutable std::mutex progress_mutex;
    SkillProgress progress;

    pf::Circuit& require_circuit();
    const pf::SolveResult& require_solution();
    /// Drops the cached solution after an equipment or load change.
    void invalidate() { solution.reset(); }
};

using ToolHandler = std::function<nlohmann::json(Engine::State&, const nlohmann::json& args)>;

/// Handler for a catalogue tool; nullptr for unknown names.
const ToolHandler* find_handler(const std::string& name);

/// Default recovery hint for an error code raised inside `tool`.
std::string default_hint(ErrorCode code, const std::string& tool);

/// Positive-sequence per-unit series impedance of a branch on the system base.
pf::cplx branch_z1_pu(const pf::Circuit& circuit, const pf::LineBranch& line);

nlohmann::json circuit_to_json(const pf::Circuit& circuit);

} // namespace gridmcp::mcp
