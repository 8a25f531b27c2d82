#pragma once

#include "gridmcp/pfcore/circuit.hpp"

#include <optional>
#include <string>
#include <variant>

namespace gridmcp::pf {

struct AddCapacitor {
    std::string id;
    std::string bus;
    std::optional<PhaseSet> phases; // all bus phases when absent
    double kvar = 0.0;
};

struct RemoveCapacitor {
    std::string id;
    bool lenient = false;
};

struct AddReactor {
    std::string id;
    std::string bus;
    std::optional<PhaseSet> phases;
    double kvar = 0.0;
};

struct RemoveReactor {
    std::string id;
    bool lenient = false;
};

struct SetTap {
    std::string regulator;
    std::optional<Phase> phase; // every phase when absent
    int tap = 0;
};

/// Replaces the demand of one load; unset fields are kept.
struct EditLoad {
    std::string id;
    std::optional<double> kw;
    std::optional<double> kvar;
};

using EquipmentChange = std::variant<AddCapacitor, RemoveCapacitor, AddReactor, RemoveReactor, SetTap, EditLoad>;

/// Applies one change in place. On error the circuit is left untouched.
void apply_equipment_change(Circuit& circuit, const EquipmentChange& change);

} // namespace gridmcp::pf
