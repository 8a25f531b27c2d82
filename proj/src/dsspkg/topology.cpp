#include "gridmcp/dsspkg/topology.hpp"

#include <map>

namespace gridmcp::dss {

std::string_view to_string(ElementKind kind) noexcept
{
    switch (kind) {
    case ElementKind::Source: return "source";
    case ElementKind::Regulator: return "regulator";
    case ElementKind::Capacitor: return "capacitor";
    case ElementKind::Load: return "load";
    case ElementKind::Junction: return "junction";
    }
    return "junction";
}

TopologyGraph topology_graph(const pf::Circuit& circuit)
{
    // Lower enum value wins.
    std::map<std::string, ElementKind, std::less<>> kind;
    auto mark = [&](const std::string& bus, ElementKind k) {
        auto [it, inserted] = kind.emplace(bus, k);
        if (!inserted && k < it->second) {
            it->second = k;
        }
    };
    mark(circuit.source.bus, ElementKind::Source);
    for (const auto& reg : circuit.regulators) {
        if (const auto* line = circuit.find_line(reg.branch_ref)) {
            mark(line->to_bus, ElementKind::Regulator);
        }
    }
    for (const auto& cap : circuit.capacitors) {
        mark(cap.bus, ElementKind::Capacitor);
    }
    for (const auto& load : circuit.loads) {
        mark(load.bus, ElementKind::Load);
    }

    TopologyGraph g;
    for (const auto& bus : circuit.buses) {
        auto it = kind.find(bus.id);
        g.nodes.push_back(TopologyNode{bus.id, bus.coord, bus.base_kv, bus.phases,
                                       it == kind.end() ? ElementKind::Junction : it->second});
    }
    for (const auto& line : circuit.lines) {
        g.edges.push_back(TopologyEdge{line.from_bus, line.to_bus, line.id, line.phases});
    }
    return g;
}

nlohmann::json to_json(const TopologyGraph& graph)
{
    auto nodes = nlohmann::json::array();
    for (const auto& n : graph.nodes) {
        nlohmann::json j = {{"bus", n.bus},
                            {"base_kv", n.base_kv},
                            {"phases", n.phases.str()},
                            {"element_kind", to_string(n.kind)},
                            {"coord", nullptr}};
        if (n.coord) {
            j["coord"] = {{"x", n.coord->x}, {"y", n.coord->y}};
        }
        nodes.push_back(std::move(j));
    }
    auto edges = nlohmann::json::array();
    for (const auto& e : graph.edges) {
        edges.push_back({{"from", e.from}, {"to", e.to}, {"branch", e.branch}, {"phases", e.phases.str()}});
    }
    return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

} // namespace gridmcp::dss
