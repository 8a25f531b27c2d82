#include "gridmcp/pfcore/solver.hpp"

#include "gridmcp/error.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

namespace gridmcp::pf {

namespace {

using PhaseVec = std::array<cplx, 3>;

struct WyeLoad {
    std::size_t bus;
    PhaseSet phases;
    cplx s_per_phase; // p.u. on the per-phase system base
};

struct DeltaElement {
    std::size_t bus;
    Phase p;
    Phase q;
    cplx s; // p.u., consumed across V_p - V_q
};

struct CompiledBranch {
    std::size_t from;
    std::size_t to;
    PhaseSet phases;
    PhaseMatrix z_pu;
    std::array<double, 3> ratio{1.0, 1.0, 1.0};
};

/// Index-based view of a circuit tailored to the sweep.
struct Network {
    std::vector<PhaseSet> bus_phases;
    std::vector<PhaseVec> shunt_y; // admittance to ground per bus/phase, p.u.
    std::vector<WyeLoad> wye;
    std::vector<DeltaElement> delta;
    std::vector<CompiledBranch> branches;
    RadialOrder order;
    std::size_t source = 0;
    PhaseVec source_v{};
    double per_phase_kva = 0.0;
};

cplx phase_rotation(Phase p)
{
    static const double shift[3] = {0.0, -120.0, 120.0};
    return std::polar(1.0, shift[index(p)] * std::numbers::pi / 180.0);
}

Network compile(const Circuit& c)
{
    validate(c);
    Network net;
    net.order = radial_order(c);
    const auto n = c.buses.size();
    std::unordered_map<std::string_view, std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
        idx.emplace(c.buses[i].id, i);
        net.bus_phases.push_back(c.buses[i].phases);
    }
    net.shunt_y.assign(n, PhaseVec{});
    net.per_phase_kva = c.base_kva / 3.0;
    net.source = idx.at(c.source.bus);
    for (auto p : kAllPhases) {
        net.source_v[index(p)] =
            c.source.pu * std::polar(1.0, c.source.angle_deg * std::numbers::pi / 180.0) * phase_rotation(p);
    }

    for (const auto& l : c.lines) {
        CompiledBranch b;
        b.from = idx.at(l.from_bus);
        b.to = idx.at(l.to_bus);
        b.phases = l.phases;
        const double zbase = impedance_base(c.buses[b.from].base_kv, c.base_kva);
        for (auto r : kAllPhases) {
            for (auto k : kAllPhases) {
                b.z_pu(r, k) = l.z_ohm(r, k) / zbase;
            }
        }
        if (const auto* reg = c.regulator_on(l.id)) {
            for (auto p : kAllPhases) {
                b.ratio[index(p)] = reg->ratio(p);
            }
        }
        for (auto p : l.phases.list()) {
            const cplx half{0.0, 0.5 * l.shunt_b[index(p)] * zbase};
            net.shunt_y[b.from][index(p)] += half;
            net.shunt_y[b.to][index(p)] += half;
        }
        net.branches.push_back(b);
    }

    // Every phase at a bus must be carried by the branch feeding it.
    for (std::size_t i = 0; i < n; ++i) {
        auto k = net.order.parent_branch[i];
        if (k != RadialOrder::npos && !c.buses[i].phases.subset_of(c.lines[k].phases)) {
            throw Error(ErrorCode::InvalidCircuit,
                        "bus '" + c.buses[i].id + "' has phases not fed by branch '" + c.lines[k].id + "'");
        }
    }

    auto add_shunts = [&](const std::vector<ShuntBank>& banks, double sign) {
        for (const auto& s : banks) {
            if (!s.enabled) {
                continue;
            }
            const double q = s.kvar / static_cast<double>(s.phases.size()) / net.per_phase_kva;
            for (auto p : s.phases.list()) {
                net.shunt_y[idx.at(s.bus)][index(p)] += cplx{0.0, sign * q};
            }
        }
    };
    add_shunts(c.capacitors, +1.0);
    add_shunts(c.reactors, -1.0);

    for (const auto& ld : c.loads) {
        const auto bus = idx.at(ld.bus);
        const cplx total = cplx{ld.kw, ld.kvar} / net.per_phase_kva;
        if (ld.connection == Connection::Wye) {
            net.wye.push_back({bus, ld.phases, total / static_cast<double>(ld.phases.size())});
        } else if (ld.phases.size() == 3) {
            const cplx s = total / 3.0;
            net.delta.push_back({bus, Phase::A, Phase::B, s});
            net.delta.push_back({bus, Phase::B, Phase::C, s});
            net.delta.push_back({bus, Phase::C, Phase::A, s});
        } else {
            auto ph = ld.phases.list();
            net.delta.push_back({bus, ph[0], ph[1], total});
        }
    }
    return net;
}

/// Current drawn at every bus/phase for the given voltages.
std::vector<PhaseVec> drawn_currents(const Network& net, const std::vector<PhaseVec>& v)
{
    std::vector<PhaseVec> i(v.size(), PhaseVec{});
    for (std::size_t b = 0; b < v.size(); ++b) {
        for (auto p : net.bus_phases[b].list()) {
            i[b][index(p)] += net.shunt_y[b][index(p)] * v[b][index(p)];
        }
    }
    for (const auto& w : net.wye) {
        for (auto p : w.phases.list()) {
            i[w.bus][index(p)] += std::conj(w.s_per_phase / v[w.bus][index(p)]);
        }
    }
    for (const auto& d : net.delta) {
        const cplx ipq = std::conj(d.s / (v[d.bus][index(d.p)] - v[d.bus][index(d.q)]));
        i[d.bus][index(d.p)] += ipq;
        i[d.bus][index(d.q)] -= ipq;
    }
    return i;
}

/// Backward pass: to-side current of every bus's parent branch.
std::vector<PhaseVec> branch_currents(const Network& net, const std::vector<PhaseVec>& drawn)
{
    std::vector<PhaseVec> j = drawn;
    const auto& order = net.order.bus_order;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto bus = *it;
        const auto k = net.order.parent_branch[bus];
        if (k == RadialOrder::npos) {
            continue;
        }
        const auto& br = net.branches[k];
        const auto parent = net.order.parent_bus[bus];
        for (auto p : br.phases.list()) {
            j[parent][index(p)] += br.ratio[index(p)] * j[bus][index(p)];
        }
    }
    return j;
}

} // namespace

SolveResult solve_power_flow(const Circuit& circuit, const SolveOptions& options)
{
    const Network net = compile(circuit);
    const auto n = circuit.buses.size();
    std::vector<PhaseVec> v(n, PhaseVec{});

    v[net.source] = net.source_v;
    for (auto bus : net.order.bus_order) {
        auto k = net.order.parent_branch[bus];
        if (k == RadialOrder::npos) {
            continue;
        }
        const auto& br = net.branches[k];
        for (auto p : net.bus_phases[bus].list()) {
            v[bus][index(p)] = br.ratio[index(p)] * v[net.order.parent_bus[bus]][index(p)];
        }
    }

    SolveResult result;
    double mismatch = 0.0;
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        auto j = branch_currents(net, drawn_currents(net, v));
        mismatch = 0.0;
        for (auto bus : net.order.bus_order) {
            auto k = net.order.parent_branch[bus];
            if (k == RadialOrder::npos) {
                continue;
            }
            const auto& br = net.branches[k];
            const auto& vp = v[net.order.parent_bus[bus]];
            for (auto p : net.bus_phases[bus].list()) {
                cplx drop{};
                for (auto q : br.phases.list()) {
                    drop += br.z_pu(p, q) * j[bus][index(q)];
                }
                const cplx updated = br.ratio[index(p)] * vp[index(p)] - drop;
                mismatch = std::max(mismatch, std::abs(updated - v[bus][index(p)]));
                v[bus][index(p)] = updated;
            }
        }
        result.iterations = iter;
        if (!std::isfinite(mismatch)) {
            break;
        }
        if (mismatch < options.tolerance) {
            result.converged = true;
            break;
        }
    }
    result.max_mismatch = mismatch;
    if (!result.converged) {
        return result;
    }

    const auto drawn = drawn_currents(net, v);
    const auto j = branch_currents(net, drawn);
    cplx loss{};
    for (auto bus : net.order.bus_order) {
        auto k = net.order.parent_branch[bus];
        if (k == RadialOrder::npos) {
            continue;
        }
        const auto& br = net.branches[k];
        for (auto p : br.phases.list()) {
            cplx drop{};
            for (auto q : br.phases.list()) {
                drop += br.z_pu(p, q) * j[bus][index(q)];
            }
            loss += drop * std::conj(j[bus][index(p)]);
        }
    }
    cplx source{};
    for (auto p : net.bus_phases[net.source].list()) {
        source += v[net.source][index(p)] * std::conj(j[net.source][index(p)]);
    }

    result.total_loss_kw = loss.real() * net.per_phase_kva;
    result.total_loss_kvar = loss.imag() * net.per_phase_kva;
    result.source_kw = source.real() * net.per_phase_kva;
    result.source_kvar = source.imag() * net.per_phase_kva;
    for (std::size_t b = 0; b < n; ++b) {
        PhaseVoltages pv;
        pv.phases = net.bus_phases[b];
        for (auto p : pv.phases.list()) {
            pv.v[index(p)] = v[b][index(p)];
        }
        result.bus_voltages.emplace(circuit.buses[b].id, pv);
    }
    return result;
}

double positive_sequence_magnitude(const PhaseVoltages& voltages)
{
    if (voltages.phases.empty()) {
        throw Error(ErrorCode::EmptyPhasorSet, "no phase voltages to summarize");
    }
    if (voltages.phases.size() == 3) {
        const cplx a = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
        return std::abs((voltages[Phase::A] + a * voltages[Phase::B] + a * a * voltages[Phase::C]) / 3.0);
    }
    double sum = 0.0;
    for (auto p : voltages.phases.list()) {
        sum += std::abs(voltages[p]);
    }
    return sum / static_cast<double>(voltages.phases.size());
}

std::map<std::string, double> positive_sequence_profile(const SolveResult& result)
{
    std::map<std::string, double> out;
    for (const auto& [bus, pv] : result.bus_voltages) {
        out.emplace(bus, positive_sequence_magnitude(pv));
    }
    return out;
}

} // namespace gridmcp::pf
