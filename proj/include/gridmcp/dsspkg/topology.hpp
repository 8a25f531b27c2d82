#pragma once

#include "gridmcp/pfcore/circuit.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridmcp::dss {

enum class ElementKind { Source, Regulator, Capacitor, Load, Junction };

std::string_view to_string(ElementKind kind) noexcept;

struct TopologyNode {
    std::string bus;
    std::optional<pf::Coord> coord;
    double base_kv = 0.0;
    pf::PhaseSet phases;
    ElementKind kind = ElementKind::Junction;
};

struct TopologyEdge {
    std::string from;
    std::string to;
    std::string branch;
    pf::PhaseSet phases;
};

struct TopologyGraph {
    std::vector<TopologyNode> nodes;
    std::vector<TopologyEdge> edges;
};

/// One node per bus, one edge per branch. When several devices share a bus
/// the kind follows source > regulator > capacitor > load > junction; the
/// regulated side of a regulator branch counts as a regulator bus.
TopologyGraph topology_graph(const pf::Circuit& circuit);

nlohmann::json to_json(const TopologyGraph& graph);

} // namespace gridmcp::dss
