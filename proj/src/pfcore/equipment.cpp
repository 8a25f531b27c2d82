#include "gridmcp/pfcore/equipment.hpp"

#include "gridmcp/error.hpp"

#include <algorithm>
#include <cmath>

namespace gridmcp::pf {

namespace {

void add_bank(Circuit& c, std::vector<ShuntBank>& banks, const std::string& id, const std::string& bus,
              const std::optional<PhaseSet>& phases, double kvar, const char* kind)
{
    const Bus* b = c.find_bus(bus);
    if (b == nullptr) {
        throw Error(ErrorCode::UnknownBus, "unknown bus '" + bus + "'");
    }
    if (!(kvar > 0.0) || !std::isfinite(kvar)) {
        throw Error(ErrorCode::InvalidArgument, std::string(kind) + " kvar must be positive");
    }
    if (id.empty()) {
        throw Error(ErrorCode::InvalidArgument, std::string(kind) + " id must not be empty");
    }
    if (std::any_of(banks.begin(), banks.end(), [&](const ShuntBank& s) { return s.id == id; })) {
        throw Error(ErrorCode::DuplicateDeviceId, std::string(kind) + " '" + id + "' already exists");
    }
    PhaseSet ph = phases.value_or(b->phases);
    if (ph.empty() || !ph.subset_of(b->phases)) {
        throw Error(ErrorCode::InvalidArgument,
                    "phases '" + ph.str() + "' are not all present at bus '" + bus + "' (" + b->phases.str() + ")");
    }
    banks.push_back(ShuntBank{id, bus, ph, kvar, true});
}

void remove_bank(std::vector<ShuntBank>& banks, const std::string& id, bool lenient, const char* kind)
{
    auto it = std::find_if(banks.begin(), banks.end(), [&](const ShuntBank& s) { return s.id == id; });
    if (it == banks.end()) {
        if (lenient) {
            return;
        }
        throw Error(ErrorCode::UnknownDevice, std::string("no ") + kind + " named '" + id + "'");
    }
    banks.erase(it);
}

} // namespace

void apply_equipment_change(Circuit& circuit, const EquipmentChange& change)
{
    std::visit(
        [&](const auto& ch) {
            using T = std::decay_t<decltype(ch)>;
            if constexpr (std::is_same_v<T, AddCapacitor>) {
                add_bank(circuit, circuit.capacitors, ch.id, ch.bus, ch.phases, ch.kvar, "capacitor");
            } else if constexpr (std::is_same_v<T, RemoveCapacitor>) {
                remove_bank(circuit.capacitors, ch.id, ch.lenient, "capacitor");
            } else if constexpr (std::is_same_v<T, AddReactor>) {
                add_bank(circuit, circuit.reactors, ch.id, ch.bus, ch.phases, ch.kvar, "reactor");
            } else if constexpr (std::is_same_v<T, RemoveReactor>) {
                remove_bank(circuit.reactors, ch.id, ch.lenient, "reactor");
            } else if constexpr (std::is_same_v<T, SetTap>) {
                auto* reg = circuit.find_regulator(ch.regulator);
                if (reg == nullptr) {
                    throw Error(ErrorCode::UnknownDevice, "no regulator named '" + ch.regulator + "'");
                }
                if (ch.tap < kMinTap || ch.tap > kMaxTap) {
                    throw Error(ErrorCode::TapOutOfRange,
                                "tap " + std::to_string(ch.tap) + " outside [-16, +16]");
                }
                if (ch.phase) {
                    reg->taps[index(*ch.phase)] = ch.tap;
                } else {
                    reg->taps.fill(ch.tap);
                }
            } else if constexpr (std::is_same_v<T, EditLoad>) {
                auto* load = circuit.find_load(ch.id);
                if (load == nullptr) {
                    throw Error(ErrorCode::UnknownDevice, "no load named '" + ch.id + "'");
                }
                if ((ch.kw && !std::isfinite(*ch.kw)) || (ch.kvar && !std::isfinite(*ch.kvar))) {
                    throw Error(ErrorCode::InvalidArgument, "load demand must be finite");
                }
                if (ch.kw) {
                    load->kw = *ch.kw;
                }
                if (ch.kvar) {
                    load->kvar = *ch.kvar;
                }
            }
        },
        change);
}

} // namespace gridmcp::pf
