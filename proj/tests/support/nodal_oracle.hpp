#pragma once

#include "gridmcp/pfcore/solver.hpp"

namespace gridmcp::testing {

/// Newton solution of the full complex nodal current balance on the bus
/// admittance matrix. Shares only the Circuit data model with the sweep
/// solver. Throws SingularJacobian or NoConvergence.
pf::SolveResult oracle_solve(const pf::Circuit& circuit, double tolerance = 1e-12, int max_iterations = 50);

} // namespace gridmcp::testing
