#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowattr/geometry.hpp"
#include "flowattr/graph.hpp"

namespace flowattr {

namespace layout_constants {
inline constexpr double kBoxWidth = 160;
inline constexpr double kBoxHeight = 48;
inline constexpr double kDiamondHeight = 80;
inline constexpr double kLayerGap = 60;
inline constexpr double kColumnGap = 40;
}  // namespace layout_constants

enum class Direction { top_down, bottom_up, left_right, right_left };

/// Accepts the Mermaid direction tokens TD, TB, BT, LR, RL.
inline Direction direction_from_token(std::string_view token) {
    if (token == "TD" || token == "TB" || token.empty()) return Direction::top_down;
    if (token == "BT") return Direction::bottom_up;
    if (token == "LR") return Direction::left_right;
    if (token == "RL") return Direction::right_left;
    throw GraphError(GraphErrorKind::invalid_argument, "unknown direction '" + std::string(token) + "'");
}

struct Placement {
    NodeLabel label;
    Shape shape = Shape::rectangle;
    int layer = 0;
    int order = 0;  // position inside the layer
    Point center;
    double width = 0;
    double height = 0;

    Box box() const { return {center.x - width / 2, center.y - height / 2, width, height}; }
};

struct Layout {
    Direction direction = Direction::top_down;
    std::vector<Placement> nodes;  // chart insertion order
    std::vector<bool> back_edge;   // parallel to FlowChart::edges()
    int layer_count = 0;

    const Placement& at(const NodeLabel& label) const {
        for (const auto& p : nodes) {
            if (p.label == label) return p;
        }
        throw GraphError(GraphErrorKind::unknown_node, "no placement for '" + label.str() + "'");
    }

    /// Bounding box of all nodes.
    Box extent() const {
        double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
        for (const auto& p : nodes) {
            auto b = p.box();
            x0 = std::min(x0, b.x);
            y0 = std::min(y0, b.y);
            x1 = std::max(x1, b.right());
            y1 = std::max(y1, b.bottom());
        }
        return {x0, y0, x1 - x0, y1 - y0};
    }
};

namespace detail {

// Edges closing a cycle in a DFS from the roots (then from any unvisited node), in insertion order.
inline std::vector<bool> find_back_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    std::vector<std::vector<std::size_t>> out(n);
    std::vector<bool> has_pred(n, false);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        out[edges[e].first].push_back(e);
        has_pred[edges[e].second] = true;
    }
    std::vector<bool> back(edges.size(), false);
    enum { white, grey, black };
    std::vector<int> colour(n, white);
    auto run = [&](std::size_t root) {
        std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
        colour[root] = grey;
        while (!stack.empty()) {
            auto& [v, next] = stack.back();
            if (next == out[v].size()) {
                colour[v] = black;
                stack.pop_back();
                continue;
            }
            std::size_t e = out[v][next++];
            std::size_t w = edges[e].second;
            if (colour[w] == grey) {
                back[e] = true;
            } else if (colour[w] == white) {
                colour[w] = grey;
                stack.emplace_back(w, 0);
            }
        }
    };
    for (std::size_t v = 0; v < n; ++v) {
        if (!has_pred[v] && colour[v] == white) run(v);
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (colour[v] == white) run(v);
    }
    return back;
}

}  // namespace detail

/// Layered layout: longest-path layers over the chart minus DFS back edges,
/// barycenter ordering inside each layer (insertion order breaks ties),
/// drawing centered on the origin.
inline Layout layout(const FlowChart& chart, Direction direction = Direction::top_down) {
    using namespace layout_constants;
    if (chart.empty()) throw GraphError(GraphErrorKind::empty_chart, "cannot lay out an empty chart");

    auto labels = chart.labels();
    const std::size_t n = labels.size();
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(labels[i].str(), i);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& e : chart.edges()) edges.emplace_back(index.at(e.from.str()), index.at(e.to.str()));

    Layout out;
    out.direction = direction;
    out.back_edge = detail::find_back_edges(n, edges);

    // Longest path from the sources of the acyclic remainder (Kahn, smallest index first).
    std::vector<std::vector<std::size_t>> succ(n), pred(n);
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        if (out.back_edge[e] || edges[e].first == edges[e].second) continue;
        succ[edges[e].first].push_back(edges[e].second);
        pred[edges[e].second].push_back(edges[e].first);
        ++indeg[edges[e].second];
    }
    std::vector<int> layer(n, 0);
    std::vector<std::size_t> ready;
    for (std::size_t v = 0; v < n; ++v) {
        if (indeg[v] == 0) ready.push_back(v);
    }
    std::size_t head = 0;
    while (head < ready.size()) {
        std::size_t v = ready[head++];
        for (std::size_t w : succ[v]) {
            layer[w] = std::max(layer[w], layer[v] + 1);
            if (--indeg[w] == 0) ready.push_back(w);
        }
    }
    int layers = *std::max_element(layer.begin(), layer.end()) + 1;
    out.layer_count = layers;

    std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(layers));
    for (std::size_t v = 0; v < n; ++v) rows[static_cast<std::size_t>(layer[v])].push_back(v);
    std::vector<double> position(n, 0);
    for (auto& row : rows) {
        std::vector<double> bary(n, 0);
        for (std::size_t v : row) {
            if (pred[v].empty()) {
                bary[v] = static_cast<double>(v);
                continue;
            }
            double sum = 0;
            for (std::size_t u : pred[v]) sum += position[u];
            bary[v] = sum / static_cast<double>(pred[v].size());
        }
        if (&row != &rows.front()) {
            std::stable_sort(row.begin(), row.end(), [&](std::size_t a, std::size_t b) { return bary[a] < bary[b]; });
        }
        for (std::size_t i = 0; i < row.size(); ++i) position[row[i]] = static_cast<double>(i);
    }

    // Canonical frame: the main axis runs along layers, the cross axis along a row.
    const bool horizontal = direction == Direction::left_right || direction == Direction::right_left;
    auto size_of = [&](std::size_t v) {
        Shape s = chart.node(labels[v]).shape;
        return std::pair{kBoxWidth, s == Shape::diamond ? kDiamondHeight : kBoxHeight};
    };
    auto main_size = [&](std::size_t v) { return horizontal ? size_of(v).first : size_of(v).second; };
    auto cross_size = [&](std::size_t v) { return horizontal ? size_of(v).second : size_of(v).first; };

    std::vector<double> thickness(rows.size(), 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t v : rows[r]) thickness[r] = std::max(thickness[r], main_size(v));
    }
    double total_main = std::accumulate(thickness.begin(), thickness.end(), 0.0) +
                        kLayerGap * static_cast<double>(rows.size() - 1);
    std::vector<double> main_center(n), cross_center(n);
    double cursor = -total_main / 2;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double row_len = kColumnGap * static_cast<double>(rows[r].size() - 1);
        for (std::size_t v : rows[r]) row_len += cross_size(v);
        double c = -row_len / 2;
        for (std::size_t v : rows[r]) {
            cross_center[v] = c + cross_size(v) / 2;
            c += cross_size(v) + kColumnGap;
            main_center[v] = cursor + thickness[r] / 2;
        }
        cursor += thickness[r] + kLayerGap;
    }

    for (std::size_t v = 0; v < n; ++v) {
        Placement p;
        p.label = labels[v];
        p.shape = chart.node(labels[v]).shape;
        p.layer = layer[v];
        p.order = static_cast<int>(position[v]);
        std::tie(p.width, p.height) = size_of(v);
        double m = main_center[v], c = cross_center[v];
        switch (direction) {
            case Direction::top_down: p.center = {c, m}; break;
            case Direction::bottom_up: p.center = {c, -m}; break;
            case Direction::left_right: p.center = {m, c}; break;
            case Direction::right_left: p.center = {-m, c}; break;
        }
        // Keep -0.0 out of the output.
        p.center.x += 0.0;
        p.center.y += 0.0;
        out.nodes.push_back(std::move(p));
    }
    return out;
}

}  // namespace flowattr
