#pragma once

#include "gridmcp/pfcore/circuit.hpp"

#include <map>
#include <string>

namespace gridmcp::pf {

struct SolveOptions {
    double tolerance = 1e-8; // max per-phase voltage change, p.u.
    int max_iterations = 100;
};

/// Per-phase complex voltages of one bus, p.u. on the bus base (line-to-neutral).
struct PhaseVoltages {
    PhaseSet phases;
    std::array<cplx, 3> v{};

    cplx operator[](Phase p) const { return v[index(p)]; }
};

struct SolveResult {
    bool converged = false;
    int iterations = 0;
    std::map<std::string, PhaseVoltages> bus_voltages; // empty unless converged
    double total_loss_kw = 0.0;
    double total_loss_kvar = 0.0;
    double source_kw = 0.0;
    double source_kvar = 0.0;
    double max_mismatch = 0.0;
};

/// Forward-backward sweep over the radial network. Throws NotRadial or
/// InvalidCircuit for structurally bad input; non-convergence is reported
/// through `converged` rather than thrown.
SolveResult solve_power_flow(const Circuit& circuit, const SolveOptions& options = {});

/// |(Va + a Vb + a^2 Vc) / 3| for three phases; mean magnitude otherwise.
/// Throws EmptyPhasorSet.
double positive_sequence_magnitude(const PhaseVoltages& voltages);

/// Positive-sequence magnitude per bus of a converged solution.
std::map<std::string, double> positive_sequence_profile(const SolveResult& result);

} // namespace gridmcp::pf
