#include "gridmcp/pfcore/circuit.hpp"

#include "gridmcp/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <set>
#include <unordered_map>

namespace gridmcp::pf {

char phase_letter(Phase p) noexcept
{
    return static_cast<char>('a' + static_cast<int>(index(p)));
}

PhaseSet PhaseSet::parse(std::string_view text)
{
    PhaseSet set;
    for (char ch : text) {
        switch (std::tolower(static_cast<unsigned char>(ch))) {
        case 'a': case '1': set.insert(Phase::A); break;
        case 'b': case '2': set.insert(Phase::B); break;
        case 'c': case '3': set.insert(Phase::C); break;
        case '.': case ' ': case ',': break;
        default:
            throw Error(ErrorCode::InvalidArgument, "invalid phase designation '" + std::string(text) + "'");
        }
    }
    if (set.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty phase designation");
    }
    return set;
}

std::vector<Phase> PhaseSet::list() const
{
    std::vector<Phase> out;
    for (auto p : kAllPhases) {
        if (contains(p)) {
            out.push_back(p);
        }
    }
    return out;
}

std::string PhaseSet::str() const
{
    std::string out;
    for (auto p : list()) {
        out.push_back(phase_letter(p));
    }
    return out;
}

namespace {

template <typename T>
auto find_by_id(T& items, std::string_view id) -> decltype(&items.front())
{
    auto it = std::find_if(items.begin(), items.end(), [&](const auto& x) { return x.id == id; });
    return it == items.end() ? nullptr : &*it;
}

[[noreturn]] void invalid(const std::string& msg)
{
    throw Error(ErrorCode::InvalidCircuit, msg);
}

} // namespace

const Bus* Circuit::find_bus(std::string_view id) const { return find_by_id(buses, id); }
Bus* Circuit::find_bus(std::string_view id) { return find_by_id(buses, id); }
const LineBranch* Circuit::find_line(std::string_view id) const { return find_by_id(lines, id); }
const LoadSpec* Circuit::find_load(std::string_view id) const { return find_by_id(loads, id); }
LoadSpec* Circuit::find_load(std::string_view id) { return find_by_id(loads, id); }
const RegulatorSpec* Circuit::find_regulator(std::string_view id) const { return find_by_id(regulators, id); }
RegulatorSpec* Circuit::find_regulator(std::string_view id) { return find_by_id(regulators, id); }

const RegulatorSpec* Circuit::regulator_on(std::string_view branch_id) const
{
    auto it = std::find_if(regulators.begin(), regulators.end(),
                           [&](const RegulatorSpec& r) { return r.branch_ref == branch_id; });
    return it == regulators.end() ? nullptr : &*it;
}

double impedance_base(double base_kv_ll, double base_kva) noexcept
{
    return base_kv_ll * base_kv_ll * 1000.0 / base_kva;
}

RadialOrder radial_order(const Circuit& circuit)
{
    const auto n = circuit.buses.size();
    std::unordered_map<std::string_view, std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
        idx.emplace(circuit.buses[i].id, i);
    }
    auto src = idx.find(circuit.source.bus);
    if (src == idx.end()) {
        throw Error(ErrorCode::UnknownBus, "source bus '" + circuit.source.bus + "' does not exist");
    }
    if (circuit.lines.size() + 1 != n) {
        throw Error(ErrorCode::NotRadial,
                    "radial network needs branches = buses - 1 (have " + std::to_string(circuit.lines.size()) +
                        " branches for " + std::to_string(n) + " buses)");
    }

    std::vector<std::vector<std::size_t>> adjacent(n);
    for (std::size_t k = 0; k < circuit.lines.size(); ++k) {
        const auto& l = circuit.lines[k];
        auto f = idx.find(l.from_bus);
        auto t = idx.find(l.to_bus);
        if (f == idx.end() || t == idx.end()) {
            throw Error(ErrorCode::UnknownBus, "branch '" + l.id + "' references an unknown bus");
        }
        if (f->second == t->second) {
            throw Error(ErrorCode::NotRadial, "branch '" + l.id + "' is a self-loop");
        }
        adjacent[f->second].push_back(k);
        adjacent[t->second].push_back(k);
    }

    RadialOrder order;
    order.parent_branch.assign(n, RadialOrder::npos);
    order.parent_bus.assign(n, RadialOrder::npos);
    std::vector<bool> seen(n, false);
    std::deque<std::size_t> queue{src->second};
    seen[src->second] = true;
    while (!queue.empty()) {
        auto b = queue.front();
        queue.pop_front();
        order.bus_order.push_back(b);
        for (auto k : adjacent[b]) {
            if (k == order.parent_branch[b]) {
                continue;
            }
            const auto& l = circuit.lines[k];
            auto other = idx.at(l.from_bus) == b ? idx.at(l.to_bus) : idx.at(l.from_bus);
            if (seen[other]) {
                throw Error(ErrorCode::NotRadial, "branch '" + l.id + "' closes a loop");
            }
            seen[other] = true;
            order.parent_branch[other] = k;
            order.parent_bus[other] = b;
            queue.push_back(other);
        }
    }
    if (order.bus_order.size() != n) {
        throw Error(ErrorCode::NotRadial, "network is not connected to the source");
    }
    return order;
}

std::vector<std::string> path_from_source(const Circuit& circuit, std::string_view bus)
{
    auto order = radial_order(circuit);
    auto it = std::find_if(circuit.buses.begin(), circuit.buses.end(), [&](const Bus& b) { return b.id == bus; });
    if (it == circuit.buses.end()) {
        throw Error(ErrorCode::UnknownBus, "unknown bus '" + std::string(bus) + "'");
    }
    std::vector<std::string> path;
    for (auto i = static_cast<std::size_t>(it - circuit.buses.begin()); i != RadialOrder::npos;
         i = order.parent_bus[i]) {
        path.push_back(circuit.buses[i].id);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<std::string> downstream_buses(const Circuit& circuit, std::string_view bus)
{
    auto order = radial_order(circuit);
    std::vector<bool> below(circuit.buses.size(), false);
    std::vector<std::string> out;
    for (auto i : order.bus_order) {
        auto parent = order.parent_bus[i];
        if (circuit.buses[i].id == bus || (parent != RadialOrder::npos && below[parent])) {
            below[i] = true;
            out.push_back(circuit.buses[i].id);
        }
    }
    if (out.empty()) {
        throw Error(ErrorCode::UnknownBus, "unknown bus '" + std::string(bus) + "'");
    }
    return out;
}

void validate(const Circuit& c)
{
    if (!(c.base_kva > 0.0) || !std::isfinite(c.base_kva)) {
        invalid("base_kva must be positive");
    }
    if (c.buses.empty()) {
        invalid("circuit has no buses");
    }
    std::set<std::string_view> ids;
    for (const auto& b : c.buses) {
        if (b.id.empty()) {
            invalid("bus with empty id");
        }
        if (!ids.insert(b.id).second) {
            throw Error(ErrorCode::DuplicateDeviceId, "duplicate bus id '" + b.id + "'");
        }
        if (b.phases.empty()) {
            invalid("bus '" + b.id + "' has no phases");
        }
        if (!(b.base_kv > 0.0)) {
            invalid("bus '" + b.id + "' has non-positive base kV");
        }
    }
    if (!(c.source.base_kv > 0.0) || !(c.source.pu > 0.0)) {
        invalid("source base kV and p.u. setpoint must be positive");
    }
    const Bus* src = c.find_bus(c.source.bus);
    if (src == nullptr) {
        throw Error(ErrorCode::UnknownBus, "source bus '" + c.source.bus + "' does not exist");
    }
    if (!src->phases.subset_of(c.source.phases)) {
        invalid("source bus carries phases the source does not supply");
    }

    auto require_bus = [&](const std::string& owner, const std::string& bus, PhaseSet phases) -> const Bus& {
        const Bus* b = c.find_bus(bus);
        if (b == nullptr) {
            throw Error(ErrorCode::UnknownBus, owner + " references unknown bus '" + bus + "'");
        }
        if (phases.empty() || !phases.subset_of(b->phases)) {
            invalid(owner + " uses phases '" + phases.str() + "' not present at bus '" + bus + "'");
        }
        return *b;
    };

    std::set<std::string_view> branch_ids;
    for (const auto& l : c.lines) {
        if (!branch_ids.insert(l.id).second) {
            throw Error(ErrorCode::DuplicateDeviceId, "duplicate branch id '" + l.id + "'");
        }
        const auto& from = require_bus("branch '" + l.id + "'", l.from_bus, l.phases);
        const auto& to = require_bus("branch '" + l.id + "'", l.to_bus, l.phases);
        double expected = l.to_base_kv.value_or(from.base_kv);
        if (std::abs(expected - to.base_kv) > 1e-9 * expected) {
            invalid("branch '" + l.id + "' joins buses of different base kV without a transformer");
        }
        for (auto r : kAllPhases) {
            for (auto k : kAllPhases) {
                bool inside = l.phases.contains(r) && l.phases.contains(k);
                if (!inside && l.z_ohm(r, k) != cplx{}) {
                    invalid("branch '" + l.id + "' impedance has entries outside its phases");
                }
                if (std::abs(l.z_ohm(r, k) - l.z_ohm(k, r)) > 1e-12 * (1.0 + std::abs(l.z_ohm(r, k)))) {
                    invalid("branch '" + l.id + "' impedance matrix is not symmetric");
                }
            }
        }
    }

    std::set<std::string> device_ids;
    for (const auto& ld : c.loads) {
        if (!device_ids.insert("load." + ld.id).second) {
            throw Error(ErrorCode::DuplicateDeviceId, "duplicate load id '" + ld.id + "'");
        }
        require_bus("load '" + ld.id + "'", ld.bus, ld.phases);
        if (ld.connection == Connection::Delta && ld.phases.size() < 2) {
            invalid("delta load '" + ld.id + "' needs two or three phases");
        }
        if (!std::isfinite(ld.kw) || !std::isfinite(ld.kvar)) {
            invalid("load '" + ld.id + "' has non-finite demand");
        }
    }
    std::set<std::string> shunt_ids;
    auto check_shunts = [&](const std::vector<ShuntBank>& banks, const char* kind) {
        for (const auto& s : banks) {
            if (!shunt_ids.insert(std::string(kind) + "." + s.id).second) {
                throw Error(ErrorCode::DuplicateDeviceId, std::string("duplicate ") + kind + " id '" + s.id + "'");
            }
            require_bus(std::string(kind) + " '" + s.id + "'", s.bus, s.phases);
            if (!(s.kvar > 0.0)) {
                invalid(std::string(kind) + " '" + s.id + "' must have positive kvar");
            }
        }
    };
    check_shunts(c.capacitors, "capacitor");
    check_shunts(c.reactors, "reactor");

    std::set<std::string_view> reg_ids;
    for (const auto& r : c.regulators) {
        if (!reg_ids.insert(r.id).second) {
            throw Error(ErrorCode::DuplicateDeviceId, "duplicate regulator id '" + r.id + "'");
        }
        if (c.find_line(r.branch_ref) == nullptr) {
            throw Error(ErrorCode::UnknownDevice, "regulator '" + r.id + "' references unknown branch '" +
                                                      r.branch_ref + "'");
        }
        for (int t : r.taps) {
            if (t < kMinTap || t > kMaxTap) {
                throw Error(ErrorCode::TapOutOfRange, "regulator '" + r.id + "' tap outside [-16, +16]");
            }
        }
        if (!(r.step_pu > 0.0) || 1.0 + r.step_pu * kMinTap <= 0.0) {
            invalid("regulator '" + r.id + "' has an invalid step size");
        }
    }

    radial_order(c);
}

} // namespace gridmcp::pf
