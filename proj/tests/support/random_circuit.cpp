#include "random_circuit.hpp"

#include <cmath>
#include <random>

namespace gridmcp::testing {

using pf::Phase;
using pf::PhaseSet;

pf::Circuit random_radial_circuit(std::uint64_t seed, std::size_t bus_count)
{
    std::mt19937_64 rng(seed);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto chance = [&](double p) { return uniform(0.0, 1.0) < p; };

    pf::Circuit c;
    c.name = "random" + std::to_string(seed);
    c.base_kva = 5000.0;
    c.source = {"b0", PhaseSet::abc(), uniform(0.98, 1.04), uniform(-5.0, 5.0), 4.16};
    c.buses.push_back({"b0", PhaseSet::abc(), 4.16, std::nullopt});

    for (std::size_t i = 1; i < bus_count; ++i) {
        const auto parent = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
        const PhaseSet parent_phases = c.buses[parent].phases;
        PhaseSet phases = parent_phases;
        if (!chance(0.6)) {
            do {
                phases = PhaseSet::from_bits(static_cast<std::uint8_t>(std::uniform_int_distribution<int>(1, 7)(rng))) &
                         parent_phases;
            } while (phases.empty());
        }
        const std::string id = "b" + std::to_string(i);
        c.buses.push_back({id, phases, 4.16, std::nullopt});

        pf::LineBranch line;
        line.id = "l" + std::to_string(i);
        line.from_bus = c.buses[parent].id;
        line.to_bus = id;
        line.phases = phases;
        const double length = uniform(0.2, 1.0);
        for (auto r : phases.list()) {
            line.z_ohm(r, r) = length * pf::cplx{uniform(0.25, 0.5), uniform(0.5, 1.0)};
            for (auto k : phases.list()) {
                if (pf::index(k) > pf::index(r)) {
                    const pf::cplx m = length * pf::cplx{uniform(0.05, 0.15), uniform(0.2, 0.4)};
                    line.z_ohm(r, k) = m;
                    line.z_ohm(k, r) = m;
                }
            }
            if (chance(0.3)) {
                line.shunt_b[pf::index(r)] = uniform(1e-6, 5e-5);
            }
        }
        c.lines.push_back(line);

        if (chance(0.8)) {
            pf::LoadSpec load;
            load.id = "ld" + std::to_string(i);
            load.bus = id;
            load.phases = phases;
            load.connection = phases.size() >= 2 && chance(0.3) ? pf::Connection::Delta : pf::Connection::Wye;
            load.kw = uniform(20.0, 250.0) * static_cast<double>(phases.size());
            load.kvar = load.kw * uniform(0.1, 0.6);
            if (chance(0.1)) {
                load.kw = -load.kw;
            }
            c.loads.push_back(load);
        }
        if (chance(0.25)) {
            c.capacitors.push_back({"cap" + std::to_string(i), id, phases, uniform(50.0, 400.0), true});
        }
        if (chance(0.1)) {
            c.reactors.push_back({"rx" + std::to_string(i), id, phases, uniform(50.0, 200.0), true});
        }
    }

    for (const auto& line : c.lines) {
        if (line.from_bus == "b0") {
            pf::RegulatorSpec reg;
            reg.id = "reg1";
            reg.branch_ref = line.id;
            for (auto& t : reg.taps) {
                t = std::uniform_int_distribution<int>(-10, 10)(rng);
            }
            c.regulators.push_back(reg);
            break;
        }
    }
    return c;
}

pf::Circuit two_bus_circuit(double r_pu, double x_pu, double p_pu, double q_pu)
{
    pf::Circuit c;
    c.name = "two_bus";
    c.base_kva = 3000.0; // 1000 kVA per phase
    const double kv = std::sqrt(3.0); // impedance base = 1 ohm
    c.source = {"s", PhaseSet{Phase::A}, 1.0, 0.0, kv};
    c.buses.push_back({"s", PhaseSet{Phase::A}, kv, std::nullopt});
    c.buses.push_back({"r", PhaseSet{Phase::A}, kv, std::nullopt});
    pf::LineBranch line;
    line.id = "line";
    line.from_bus = "s";
    line.to_bus = "r";
    line.phases = PhaseSet{Phase::A};
    line.z_ohm(Phase::A, Phase::A) = {r_pu, x_pu};
    c.lines.push_back(line);
    c.loads.push_back({"load", "r", PhaseSet{Phase::A}, pf::Connection::Wye, p_pu * 1000.0, q_pu * 1000.0, {}});
    return c;
}

} // namespace gridmcp::testing
