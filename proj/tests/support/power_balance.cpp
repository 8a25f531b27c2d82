#include "power_balance.hpp"

#include <cmath>

namespace gridmcp::testing {

double power_balance_residual(const pf::Circuit& c, const pf::SolveResult& result)
{
    const double per_phase = c.base_kva / 3.0;
    pf::cplx consumed{};
    for (const auto& ld : c.loads) {
        consumed += pf::cplx{ld.kw, ld.kvar};
    }
    auto shunt = [&](const pf::ShuntBank& s, double sign) {
        const auto& pv = result.bus_voltages.at(s.bus);
        for (auto p : s.phases.list()) {
            const double v2 = std::norm(pv[p]);
            consumed += pf::cplx{0.0, -sign * s.kvar / static_cast<double>(s.phases.size()) * v2};
        }
    };
    for (const auto& s : c.capacitors) {
        if (s.enabled) {
            shunt(s, 1.0);
        }
    }
    for (const auto& s : c.reactors) {
        if (s.enabled) {
            shunt(s, -1.0);
        }
    }
    for (const auto& l : c.lines) {
        const double zbase = pf::impedance_base(c.find_bus(l.from_bus)->base_kv, c.base_kva);
        for (auto p : l.phases.list()) {
            const double half_b = 0.5 * l.shunt_b[pf::index(p)] * zbase;
            for (const auto* bus : {&l.from_bus, &l.to_bus}) {
                consumed += pf::cplx{0.0, -half_b * std::norm(result.bus_voltages.at(*bus)[p]) * per_phase};
            }
        }
    }
    consumed += pf::cplx{result.total_loss_kw, result.total_loss_kvar};
    const pf::cplx source{result.source_kw, result.source_kvar};
    return std::abs(source - consumed) / c.base_kva;
}

} // namespace gridmcp::testing
