#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flowattr/detail/strings.hpp"

namespace flowattr {

enum class GraphErrorKind {
    unknown_node,
    duplicate_node,
    duplicate_edge,
    empty_chart,
    invalid_label,
    invalid_argument,
};

inline std::string_view to_string(GraphErrorKind kind) {
    switch (kind) {
        case GraphErrorKind::unknown_node: return "unknown_node";
        case GraphErrorKind::duplicate_node: return "duplicate_node";
        case GraphErrorKind::duplicate_edge: return "duplicate_edge";
        case GraphErrorKind::empty_chart: return "empty_chart";
        case GraphErrorKind::invalid_label: return "invalid_label";
        case GraphErrorKind::invalid_argument: return "invalid_argument";
    }
    return "unknown";
}

class GraphError : public std::runtime_error {
public:
    GraphError(GraphErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    GraphErrorKind kind() const noexcept { return kind_; }

private:
    GraphErrorKind kind_;
};

/// Identifier of a node, e.g. "A", "AB". Mermaid id alphabet: [A-Za-z0-9_]+.
class NodeLabel {
public:
    NodeLabel() = default;
    explicit NodeLabel(std::string value) : value_(std::move(value)) {
        if (!is_valid(value_)) {
            throw GraphError(GraphErrorKind::invalid_label, "invalid node label '" + value_ + "'");
        }
    }
    NodeLabel(const char* value) : NodeLabel(std::string(value)) {}

    static bool is_valid(std::string_view s) {
        if (s.empty()) return false;
        return std::all_of(s.begin(), s.end(), [](unsigned char c) {
            return std::isalnum(c) != 0 || c == '_';
        });
    }

    const std::string& str() const noexcept { return value_; }

    auto operator<=>(const NodeLabel&) const = default;
    bool operator==(const NodeLabel&) const = default;

private:
    std::string value_;
};

/// Sequential alphabetic label: 0 -> A, 25 -> Z, 26 -> AA, 27 -> AB, ...
inline NodeLabel alpha_label(std::size_t index) {
    std::string s;
    std::size_t n = index + 1;
    while (n > 0) {
        --n;
        s.insert(s.begin(), static_cast<char>('A' + n % 26));
        n /= 26;
    }
    return NodeLabel(std::move(s));
}

/// Edge condition. Yes/No come from decision branches; Other keeps any
/// non-boolean Mermaid edge label.
class Condition {
public:
    enum class Kind { unconditional, yes, no, other };

    Condition() = default;

    static Condition unconditional() { return {}; }
    static Condition yes() { return Condition(Kind::yes, {}); }
    static Condition no() { return Condition(Kind::no, {}); }
    static Condition other(std::string_view text) {
        auto t = detail::trim(text);
        if (t.empty()) {
            throw GraphError(GraphErrorKind::invalid_argument, "Other condition requires a non-empty label");
        }
        if (detail::iequals(t, "yes") || detail::iequals(t, "no")) {
            throw GraphError(GraphErrorKind::invalid_argument,
                             "label '" + std::string(t) + "' is a boolean condition, not Other");
        }
        return Condition(Kind::other, std::string(t));
    }

    /// Maps an edge label as written in Mermaid: empty -> unconditional,
    /// yes/no in any case -> Yes/No, anything else -> Other.
    static Condition from_label(std::string_view label) {
        auto t = detail::trim(label);
        if (t.empty()) return unconditional();
        if (detail::iequals(t, "yes")) return yes();
        if (detail::iequals(t, "no")) return no();
        return other(t);
    }

    Kind kind() const noexcept { return kind_; }
    const std::string& text() const noexcept { return text_; }

    /// "Yes", "No", the Other text, or "" for unconditional.
    std::string display() const {
        switch (kind_) {
            case Kind::yes: return "Yes";
            case Kind::no: return "No";
            case Kind::other: return text_;
            case Kind::unconditional: break;
        }
        return {};
    }

    bool operator==(const Condition&) const = default;

private:
    Condition(Kind kind, std::string text) : kind_(kind), text_(std::move(text)) {}

    Kind kind_ = Kind::unconditional;
    std::string text_;
};

enum class Shape { rectangle, diamond, rounded, stadium, unknown };

inline std::string_view to_string(Shape shape) {
    switch (shape) {
        case Shape::rectangle: return "rectangle";
        case Shape::diamond: return "diamond";
        case Shape::rounded: return "rounded";
        case Shape::stadium: return "stadium";
        case Shape::unknown: return "unknown";
    }
    return "unknown";
}

inline std::optional<Shape> shape_from_string(std::string_view s) {
    for (Shape shape : {Shape::rectangle, Shape::diamond, Shape::rounded, Shape::stadium, Shape::unknown}) {
        if (to_string(shape) == s) return shape;
    }
    return std::nullopt;
}

/// Branch value a constraint pins on a decision node.
enum class Branch { yes, no };

/// Per-node branch restriction applied during traversal. A constrained node
/// only follows its unconditional edges and the edges whose condition equals
/// the pinned branch.
using ConditionConstraint = std::map<NodeLabel, Branch>;

enum class Statements { omit, include };

struct Node {
    NodeLabel label;
    std::string statement;
    Shape shape = Shape::unknown;

    bool operator==(const Node&) const = default;
};

struct Edge {
    NodeLabel from;
    NodeLabel to;
    Condition condition;

    bool operator==(const Edge&) const = default;
};

/// A node reference in a query result; statement filled on request.
struct NodeRef {
    NodeLabel label;
    std::optional<std::string> statement;

    bool operator==(const NodeRef&) const = default;
};

struct Neighbour {
    NodeLabel label;
    Condition condition;
    std::optional<std::string> statement;

    bool operator==(const Neighbour&) const = default;
};

struct DegreeEntry {
    NodeLabel label;
    std::size_t degree = 0;

    bool operator==(const DegreeEntry&) const = default;
};

inline std::vector<NodeLabel> labels_of(const std::vector<NodeRef>& refs) {
    std::vector<NodeLabel> out;
    out.reserve(refs.size());
    for (const auto& r : refs) out.push_back(r.label);
    return out;
}

/// Directed graph of labeled nodes and conditional edges.
///
/// Nodes keep insertion order; every traversal breaks ties by that order
/// (or by edge insertion order when expanding out-edges), so all query
/// results are reproducible. Construction is single-writer; a fully built
/// chart is safe for concurrent readers.
class FlowChart {
public:
    void add_node(NodeLabel label, std::string statement, Shape shape) {
        if (index_.contains(label.str())) {
            throw GraphError(GraphErrorKind::duplicate_node, "duplicate node label '" + label.str() + "'");
        }
        if (statement.empty() && shape != Shape::unknown) {
            throw GraphError(GraphErrorKind::invalid_argument,
                             "node '" + label.str() + "' needs a statement unless its shape is unknown");
        }
        index_.emplace(label.str(), slots_.size());
        slots_.push_back(Slot{Node{std::move(label), std::move(statement), shape}, {}, {}, 0});
    }

    void add_edge(const NodeLabel& from, const NodeLabel& to, Condition condition) {
        std::size_t f = require(from);
        std::size_t t = require(to);
        for (const auto& e : slots_[f].out) {
            if (e.to == t && e.condition == condition) {
                throw GraphError(GraphErrorKind::duplicate_edge,
                                 "duplicate edge " + from.str() + " -> " + to.str() +
                                     describe_condition(condition));
            }
        }
        slots_[f].out.push_back(OutEdge{t, std::move(condition)});
        edge_order_.emplace_back(f, slots_[f].out.size() - 1);
        auto& preds = slots_[t].preds;
        auto it = std::lower_bound(preds.begin(), preds.end(), f);
        if (it == preds.end() || *it != f) preds.insert(it, f);
        ++slots_[t].in_degree;
    }

    /// Replaces statement and shape of an existing node (used by the parser
    /// to complete nodes first seen as bare references).
    void redefine_node(const NodeLabel& label, std::string statement, Shape shape) {
        auto& node = slots_[require(label)].node;
        if (statement.empty() && shape != Shape::unknown) {
            throw GraphError(GraphErrorKind::invalid_argument,
                             "node '" + label.str() + "' needs a statement unless its shape is unknown");
        }
        node.statement = std::move(statement);
        node.shape = shape;
    }

    std::size_t node_count() const noexcept { return slots_.size(); }
    std::size_t edge_count() const noexcept { return edge_order_.size(); }
    bool empty() const noexcept { return slots_.empty(); }
    bool contains(const NodeLabel& label) const { return index_.contains(label.str()); }

    const Node& node(const NodeLabel& label) const { return slots_[require(label)].node; }

    std::vector<Node> nodes() const {
        std::vector<Node> out;
        out.reserve(slots_.size());
        for (const auto& s : slots_) out.push_back(s.node);
        return out;
    }

    std::vector<NodeLabel> labels() const {
        std::vector<NodeLabel> out;
        out.reserve(slots_.size());
        for (const auto& s : slots_) out.push_back(s.node.label);
        return out;
    }

    /// All edges in global insertion order.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(edge_order_.size());
        for (auto [f, k] : edge_order_) {
            const auto& e = slots_[f].out[k];
            out.push_back(Edge{slots_[f].node.label, slots_[e.to].node.label, e.condition});
        }
        return out;
    }

    bool has_edge(const NodeLabel& from, const NodeLabel& to) const {
        auto f = find(from);
        auto t = find(to);
        if (!f || !t) return false;
        return std::any_of(slots_[*f].out.begin(), slots_[*f].out.end(),
                           [&](const OutEdge& e) { return e.to == *t; });
    }

    const std::string& statement(const NodeLabel& label) const { return slots_[require(label)].node.statement; }

    std::size_t in_degree(const NodeLabel& label) const { return slots_[require(label)].in_degree; }
    std::size_t out_degree(const NodeLabel& label) const { return slots_[require(label)].out.size(); }

    std::vector<DegreeEntry> max_in_degree() const {
        return max_degree([](const Slot& s) { return s.in_degree; });
    }
    std::vector<DegreeEntry> max_out_degree() const {
        return max_degree([](const Slot& s) { return s.out.size(); });
    }

    /// Out-neighbours in edge insertion order, one entry per edge.
    std::vector<Neighbour> neighbours(const NodeLabel& label, Statements st = Statements::omit) const {
        const auto& slot = slots_[require(label)];
        std::vector<Neighbour> out;
        out.reserve(slot.out.size());
        for (const auto& e : slot.out) {
            out.push_back(Neighbour{slots_[e.to].node.label, e.condition, statement_if(e.to, st)});
        }
        return out;
    }

    /// Nodes with a directed path to `label` within `levels` reverse hops
    /// (unbounded when absent), in reverse-BFS discovery order with
    /// predecessors expanded in node insertion order. Excludes `label`.
    std::vector<NodeRef> ancestors(const NodeLabel& label, std::optional<int> levels = std::nullopt,
                                   Statements st = Statements::omit) const {
        check_levels(levels);
        return level_bfs(require(label), levels, st, [this](std::size_t v, auto&& visit) {
            for (std::size_t p : slots_[v].preds) visit(p);
        });
    }

    /// Nodes reachable from `label` within `levels` hops, in BFS discovery
    /// order with out-edges expanded in insertion order. Excludes `label`.
    std::vector<NodeRef> descendants(const NodeLabel& label, std::optional<int> levels = std::nullopt,
                                     Statements st = Statements::omit) const {
        check_levels(levels);
        return level_bfs(require(label), levels, st, [this](std::size_t v, auto&& visit) {
            for (const auto& e : slots_[v].out) visit(e.to);
        });
    }

    /// First root in insertion order, or the first node if every node has an
    /// incoming edge.
    NodeLabel default_start() const {
        if (slots_.empty()) throw GraphError(GraphErrorKind::empty_chart, "chart has no nodes");
        for (const auto& s : slots_) {
            if (s.in_degree == 0) return s.node.label;
        }
        return slots_.front().node.label;
    }

    std::vector<NodeRef> bfs(const std::optional<NodeLabel>& start = std::nullopt,
                             const ConditionConstraint& constraint = {},
                             Statements st = Statements::omit) const {
        std::size_t s = resolve_start(start);
        auto pins = resolve_constraint(constraint);
        std::vector<char> seen(slots_.size(), 0);
        std::vector<std::size_t> order{s};
        seen[s] = 1;
        for (std::size_t head = 0; head < order.size(); ++head) {
            std::size_t v = order[head];
            for (const auto& e : slots_[v].out) {
                if (!seen[e.to] && traversable(pins[v], e.condition)) {
                    seen[e.to] = 1;
                    order.push_back(e.to);
                }
            }
        }
        return refs(order, st);
    }

    /// Depth-first pre-order; out-edges expanded in insertion order.
    std::vector<NodeRef> dfs(const std::optional<NodeLabel>& start = std::nullopt,
                             const ConditionConstraint& constraint = {},
                             Statements st = Statements::omit) const {
        std::size_t s = resolve_start(start);
        auto pins = resolve_constraint(constraint);
        std::vector<std::size_t> order;
        walk_dfs(s, pins, [&](std::size_t v, const std::vector<std::size_t>&) {
            order.push_back(v);
            return false;
        });
        return refs(order, st);
    }

    /// The first path the deterministic DFS finds; [start] when start == end.
    std::optional<std::vector<NodeRef>> path_between(const NodeLabel& start, const NodeLabel& end,
                                                     const ConditionConstraint& constraint = {},
                                                     Statements st = Statements::omit) const {
        std::size_t s = require(start);
        std::size_t t = require(end);
        auto pins = resolve_constraint(constraint);
        std::optional<std::vector<std::size_t>> found;
        walk_dfs(s, pins, [&](std::size_t v, const std::vector<std::size_t>& path) {
            if (v != t) return false;
            found = path;
            return true;
        });
        if (!found) return std::nullopt;
        return refs(*found, st);
    }

    /// Minimum-hop path; among equal lengths the BFS tie-break winner.
    std::optional<std::vector<NodeRef>> shortest_path(const NodeLabel& start, const NodeLabel& end,
                                                      const ConditionConstraint& constraint = {},
                                                      Statements st = Statements::omit) const {
        std::size_t s = require(start);
        std::size_t t = require(end);
        auto pins = resolve_constraint(constraint);
        constexpr std::size_t none = static_cast<std::size_t>(-1);
        std::vector<std::size_t> parent(slots_.size(), none);
        std::vector<char> seen(slots_.size(), 0);
        std::vector<std::size_t> queue{s};
        seen[s] = 1;
        for (std::size_t head = 0; head < queue.size() && !seen[t]; ++head) {
            std::size_t v = queue[head];
            for (const auto& e : slots_[v].out) {
                if (!seen[e.to] && traversable(pins[v], e.condition)) {
                    seen[e.to] = 1;
                    parent[e.to] = v;
                    queue.push_back(e.to);
                }
            }
        }
        if (!seen[t]) return std::nullopt;
        std::vector<std::size_t> path;
        for (std::size_t v = t; v != none; v = parent[v]) path.push_back(v);
        std::reverse(path.begin(), path.end());
        return refs(path, st);
    }

    /// Structural equality: same nodes in the same order, same edges in the
    /// same insertion order.
    bool operator==(const FlowChart& other) const {
        return nodes() == other.nodes() && edges() == other.edges();
    }

private:
    struct OutEdge {
        std::size_t to;
        Condition condition;
    };

    struct Slot {
        Node node;
        std::vector<OutEdge> out;
        std::vector<std::size_t> preds;  // sorted, unique
        std::size_t in_degree;
    };

    std::optional<std::size_t> find(const NodeLabel& label) const {
        auto it = index_.find(label.str());
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t require(const NodeLabel& label) const {
        auto idx = find(label);
        if (!idx) throw GraphError(GraphErrorKind::unknown_node, "unknown node '" + label.str() + "'");
        return *idx;
    }

    static std::string describe_condition(const Condition& c) {
        auto d = c.display();
        return d.empty() ? std::string{} : " [" + d + "]";
    }

    static void check_levels(std::optional<int> levels) {
        if (levels && *levels < 1) {
            throw GraphError(GraphErrorKind::invalid_argument, "levels must be >= 1");
        }
    }

    std::optional<std::string> statement_if(std::size_t idx, Statements st) const {
        if (st == Statements::omit) return std::nullopt;
        return slots_[idx].node.statement;
    }

    std::vector<NodeRef> refs(const std::vector<std::size_t>& idxs, Statements st) const {
        std::vector<NodeRef> out;
        out.reserve(idxs.size());
        for (std::size_t i : idxs) out.push_back(NodeRef{slots_[i].node.label, statement_if(i, st)});
        return out;
    }

    template <typename Degree>
    std::vector<DegreeEntry> max_degree(Degree degree) const {
        if (slots_.empty()) throw GraphError(GraphErrorKind::empty_chart, "chart has no nodes");
        std::size_t best = 0;
        for (const auto& s : slots_) best = std::max(best, degree(s));
        std::vector<DegreeEntry> out;
        for (const auto& s : slots_) {
            if (degree(s) == best) out.push_back(DegreeEntry{s.node.label, best});
        }
        return out;
    }

    template <typename Expand>
    std::vector<NodeRef> level_bfs(std::size_t origin, std::optional<int> levels, Statements st,
                                   Expand expand) const {
        std::vector<char> seen(slots_.size(), 0);
        seen[origin] = 1;
        std::vector<std::size_t> frontier{origin};
        std::vector<std::size_t> found;
        for (int depth = 0; !frontier.empty() && (!levels || depth < *levels); ++depth) {
            std::vector<std::size_t> next;
            for (std::size_t v : frontier) {
                expand(v, [&](std::size_t w) {
                    if (!seen[w]) {
                        seen[w] = 1;
                        next.push_back(w);
                    }
                });
            }
            found.insert(found.end(), next.begin(), next.end());
            frontier = std::move(next);
        }
        return refs(found, st);
    }

    std::size_t resolve_start(const std::optional<NodeLabel>& start) const {
        return start ? require(*start) : require(default_start());
    }

    std::vector<std::optional<Branch>> resolve_constraint(const ConditionConstraint& constraint) const {
        std::vector<std::optional<Branch>> pins(slots_.size());
        for (const auto& [label, branch] : constraint) pins[require(label)] = branch;
        return pins;
    }

    static bool traversable(const std::optional<Branch>& pin, const Condition& c) {
        if (!pin || c.kind() == Condition::Kind::unconditional) return true;
        return (c.kind() == Condition::Kind::yes && *pin == Branch::yes) ||
               (c.kind() == Condition::Kind::no && *pin == Branch::no);
    }

    /// Iterative recursive-equivalent DFS. `on_visit(v, path)` is called in
    /// pre-order with the current root-to-v path; returning true stops.
    template <typename OnVisit>
    void walk_dfs(std::size_t start, const std::vector<std::optional<Branch>>& pins, OnVisit on_visit) const {
        std::vector<char> seen(slots_.size(), 0);
        std::vector<std::size_t> path{start};
        std::vector<std::size_t> cursor{0};
        seen[start] = 1;
        if (on_visit(start, path)) return;
        while (!path.empty()) {
            std::size_t v = path.back();
            auto& k = cursor.back();
            const auto& out = slots_[v].out;
            while (k < out.size() && (seen[out[k].to] || !traversable(pins[v], out[k].condition))) ++k;
            if (k == out.size()) {
                path.pop_back();
                cursor.pop_back();
                continue;
            }
            std::size_t w = out[k++].to;
            seen[w] = 1;
            path.push_back(w);
            cursor.push_back(0);
            if (on_visit(w, path)) return;
        }
    }

    std::vector<Slot> slots_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::pair<std::size_t, std::size_t>> edge_order_;
};

}  // namespace flowattr

template <>
struct std::hash<flowattr::NodeLabel> {
    std::size_t operator()(const flowattr::NodeLabel& l) const noexcept { return std::hash<std::string>{}(l.str()); }
};
