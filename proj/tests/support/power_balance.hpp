#pragma once

#include "gridmcp/pfcore/solver.hpp"

namespace gridmcp::testing {

/// |S_source - (S_loads + S_shunts + S_losses)| in p.u. of the system base,
/// with load and shunt consumption recomputed from the solved voltages.
double power_balance_residual(const pf::Circuit& circuit, const pf::SolveResult& result);

} // namespace gridmcp::testing
