#pragma once

#include <string>

#include "json.hpp"

#include "flowattr/graph.hpp"

namespace flowattr {

using ordered_json = nlohmann::ordered_json;

/// "yes" | "no" | null | {"other": text}
inline ordered_json condition_to_json(const Condition& c) {
    switch (c.kind()) {
        case Condition::Kind::yes: return "yes";
        case Condition::Kind::no: return "no";
        case Condition::Kind::other: return ordered_json{{"other", c.text()}};
        case Condition::Kind::unconditional: break;
    }
    return nullptr;
}

inline Condition condition_from_json(const ordered_json& j) {
    if (j.is_null()) return Condition::unconditional();
    if (j.is_string()) {
        auto s = j.get<std::string>();
        if (s == "yes") return Condition::yes();
        if (s == "no") return Condition::no();
    }
    if (j.is_object() && j.contains("other") && j.at("other").is_string()) {
        return Condition::other(j.at("other").get<std::string>());
    }
    throw GraphError(GraphErrorKind::invalid_argument, "bad condition value: " + j.dump());
}

/// Canonical projection {"nodes":[{label,statement,shape}], "edges":[{from,to,condition}]}.
inline ordered_json to_json(const FlowChart& chart) {
    ordered_json nodes = ordered_json::array();
    for (const auto& n : chart.nodes()) {
        nodes.push_back({{"label", n.label.str()}, {"statement", n.statement}, {"shape", to_string(n.shape)}});
    }
    ordered_json edges = ordered_json::array();
    for (const auto& e : chart.edges()) {
        edges.push_back({{"from", e.from.str()}, {"to", e.to.str()}, {"condition", condition_to_json(e.condition)}});
    }
    return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

inline FlowChart chart_from_json(const ordered_json& j) {
    FlowChart chart;
    for (const auto& n : j.at("nodes")) {
        auto shape_name = n.at("shape").get<std::string>();
        auto shape = shape_from_string(shape_name);
        if (!shape) throw GraphError(GraphErrorKind::invalid_argument, "unknown shape '" + shape_name + "'");
        chart.add_node(NodeLabel(n.at("label").get<std::string>()), n.at("statement").get<std::string>(), *shape);
    }
    for (const auto& e : j.at("edges")) {
        chart.add_edge(NodeLabel(e.at("from").get<std::string>()), NodeLabel(e.at("to").get<std::string>()),
                       condition_from_json(e.at("condition")));
    }
    return chart;
}

}  // namespace flowattr
