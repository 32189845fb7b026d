#pragma once

#include <random>
#include <string>

#include "flowattr/graph.hpp"

namespace fixtures {

inline constexpr const char* kG1Mermaid =
    "flowchart TD\n"
    "    A[Start] --> B{Is x > 0?}\n"
    "    B -->|Yes| C[Print positive]\n"
    "    B -->|No| D[Print non-positive]\n"
    "    C --> E([End])\n"
    "    D --> E\n";

/// A -> B; B -Yes-> C; B -No-> D; C -> E; D -> E
inline flowattr::FlowChart g1() {
    using flowattr::Condition;
    using flowattr::Shape;
    flowattr::FlowChart g;
    g.add_node("A", "Start", Shape::rectangle);
    g.add_node("B", "Is x > 0?", Shape::diamond);
    g.add_node("C", "Print positive", Shape::rectangle);
    g.add_node("D", "Print non-positive", Shape::rectangle);
    g.add_node("E", "End", Shape::stadium);
    g.add_edge("A", "B", Condition::unconditional());
    g.add_edge("B", "C", Condition::yes());
    g.add_edge("B", "D", Condition::no());
    g.add_edge("C", "E", Condition::unconditional());
    g.add_edge("D", "E", Condition::unconditional());
    return g;
}

inline flowattr::Condition random_condition(std::mt19937_64& rng) {
    switch (rng() % 6) {
        case 0: return flowattr::Condition::yes();
        case 1: return flowattr::Condition::no();
        case 2: return flowattr::Condition::other("maybe");
        default: return flowattr::Condition::unconditional();
    }
}

/// Random chart with `n` nodes and pairwise edge probability `density`.
/// Acyclic unless `cyclic`, in which case at least one back edge is added.
inline flowattr::FlowChart random_chart(std::mt19937_64& rng, int n, double density, bool cyclic) {
    using flowattr::Shape;
    flowattr::FlowChart g;
    const Shape shapes[] = {Shape::rectangle, Shape::diamond, Shape::rounded, Shape::stadium};
    for (int i = 0; i < n; ++i) {
        g.add_node(flowattr::alpha_label(static_cast<std::size_t>(i)), "step " + std::to_string(i),
                   shapes[rng() % 4]);
    }
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    auto try_add = [&](int u, int v) {
        try {
            g.add_edge(flowattr::alpha_label(u), flowattr::alpha_label(v), random_condition(rng));
        } catch (const flowattr::GraphError&) {
        }
    };
    for (int u = 0; u < n; ++u) {
        for (int v = u + 1; v < n; ++v) {
            if (coin(rng) < density) try_add(u, v);
            if (coin(rng) < density * 0.2) try_add(u, v);  // occasional parallel edge
        }
    }
    if (cyclic && n >= 1) {
        int u = static_cast<int>(rng() % n);
        int v = static_cast<int>(rng() % (u + 1));  // v <= u: back edge or self loop
        try_add(u, v);
        for (int k = 0; k < n; ++k) {
            if (coin(rng) < density * 0.3) {
                int a = static_cast<int>(rng() % n);
                int b = static_cast<int>(rng() % (a + 1));
                try_add(a, b);
            }
        }
    }
    return g;
}

}  // namespace fixtures
