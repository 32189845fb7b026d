#pragma once

#include <chrono>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "flowattr/detail/strings.hpp"
#include "flowattr/graph.hpp"
#include "flowattr/graph_json.hpp"

namespace flowattr::tools {

enum class ArgType { string, integer, boolean, object, any };

inline std::string_view json_type_name(ArgType t) {
    switch (t) {
        case ArgType::string: return "string";
        case ArgType::integer: return "integer";
        case ArgType::boolean: return "boolean";
        case ArgType::object: return "object";
        case ArgType::any: break;
    }
    return "any";
}

struct ArgSpec {
    std::string name;
    ArgType type;
    bool required;
    std::string description;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ArgSpec> arguments;

    const ArgSpec* find(std::string_view arg) const {
        for (const auto& a : arguments)
            if (a.name == arg) return &a;
        return nullptr;
    }
};

struct ToolCall {
    std::string tool;
    ordered_json arguments = ordered_json::object();
    std::string call_id;
};

enum class Status { ok, error };

inline std::string_view to_string(Status s) { return s == Status::ok ? "ok" : "error"; }

struct ToolResult {
    std::string call_id;
    Status status = Status::ok;
    ordered_json payload;
    std::string rendered;
    double duration_ms = 0.0;
    std::vector<std::string> warnings;
};

struct ValidationIssue {
    enum class Kind { unknown_tool, missing_argument, unknown_argument, type_mismatch, out_of_range };
    Kind kind;
    std::string argument;
    std::string message;
};

inline std::string_view to_string(ValidationIssue::Kind k) {
    using K = ValidationIssue::Kind;
    switch (k) {
        case K::unknown_tool: return "unknown_tool";
        case K::missing_argument: return "missing_argument";
        case K::unknown_argument: return "unknown_argument";
        case K::type_mismatch: return "type_mismatch";
        case K::out_of_range: return "out_of_range";
    }
    return "invalid";
}

/// The thirteen tools, in registry order.
inline const std::vector<ToolSpec>& list_tools() {
    static const std::vector<ToolSpec> specs = [] {
        const ArgSpec node_id{"node_id", ArgType::string, true, "Label of the node."};
        const ArgSpec levels{"levels", ArgType::integer, false, "Maximum number of hops to follow (>= 1)."};
        const ArgSpec statements{"include_statements", ArgType::boolean, false,
                                 "Attach each node's statement to the result. Defaults to false."};
        const ArgSpec start_opt{"start_id", ArgType::string, false,
                                "Label of the start node. Defaults to the first root."};
        const ArgSpec conditions{"conditions", ArgType::object, false,
                                 "Branch to follow at decision nodes, e.g. {\"B\": \"Yes\"}."};
        const ArgSpec start{"start_id", ArgType::string, true, "Label of the start node."};
        const ArgSpec end{"end_id", ArgType::string, true, "Label of the end node."};
        return std::vector<ToolSpec>{
            {"get_statement", "Return the statement text of a node.", {node_id}},
            {"get_ancestors", "List every node with a path leading to the given node.", {node_id, levels, statements}},
            {"get_descendants", "List every node reachable from the given node.", {node_id, levels, statements}},
            {"get_neighbours", "List the targets of the node's outgoing edges with their conditions.",
             {node_id, statements}},
            {"in_degree", "Count the incoming edges of a node.", {node_id}},
            {"out_degree", "Count the outgoing edges of a node.", {node_id}},
            {"max_in_degree", "List the nodes that have the most incoming edges.", {}},
            {"max_out_degree", "List the nodes that have the most outgoing edges.", {}},
            {"bfs", "Breadth-first traversal from a start node.", {start_opt, conditions, statements}},
            {"dfs", "Depth-first traversal from a start node.", {start_opt, conditions, statements}},
            {"path_between", "Find a path between two nodes, respecting branch conditions.",
             {start, end, conditions, statements}},
            {"shortest_path", "Find the shortest path between two nodes (breadth-first).",
             {start, end, conditions, statements}},
            {"final_answer", "Submit the attributed nodes and end the episode.",
             {{"answer", ArgType::any, true,
               "The attribution: {\"nodes\": [labels in path order], \"reasoning\": text}."}}},
        };
    }();
    return specs;
}

inline const ToolSpec* find_tool(std::string_view name) {
    for (const auto& t : list_tools())
        if (t.name == name) return &t;
    return nullptr;
}

/// Function-calling schema document: [{name, description, parameters:{type, properties, required}}].
inline ordered_json tool_schemas() {
    ordered_json out = ordered_json::array();
    for (const auto& t : list_tools()) {
        ordered_json props = ordered_json::object();
        ordered_json required = ordered_json::array();
        for (const auto& a : t.arguments) {
            ordered_json p = {{"description", a.description}};
            if (a.type != ArgType::any) p["type"] = json_type_name(a.type);
            if (a.type == ArgType::integer) p["minimum"] = 1;
            if (a.name == "conditions") p["additionalProperties"] = {{"type", "string"}, {"enum", {"Yes", "No"}}};
            props[a.name] = std::move(p);
            if (a.required) required.push_back(a.name);
        }
        out.push_back({{"name", t.name},
                       {"description", t.description},
                       {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}});
    }
    return out;
}

struct Coerced {
    ordered_json arguments = ordered_json::object();
    std::vector<std::string> warnings;
    std::vector<ValidationIssue> issues;
};

namespace detail {

inline std::optional<ordered_json> coerce_value(const ArgSpec& spec, const ordered_json& v, Coerced& out) {
    using K = ValidationIssue::Kind;
    auto mismatch = [&](std::string what) {
        out.issues.push_back({K::type_mismatch, spec.name, spec.name + ": " + what});
        return std::nullopt;
    };
    switch (spec.type) {
        case ArgType::any: return v;
        case ArgType::string:
            if (!v.is_string()) return mismatch("expected a string");
            return v;
        case ArgType::integer: {
            long long value = 0;
            if (v.is_number_integer()) {
                value = v.get<long long>();
            } else if (v.is_string() && std::regex_match(v.get<std::string>(), std::regex(R"(\s*-?\d{1,9}\s*)"))) {
                value = std::stoll(v.get<std::string>());
                out.warnings.push_back(spec.name + ": coerced string \"" + v.get<std::string>() + "\" to integer");
            } else {
                return mismatch("expected an integer");
            }
            if (value < 1) {
                out.issues.push_back({K::out_of_range, spec.name, spec.name + ": must be >= 1"});
                return std::nullopt;
            }
            return ordered_json(value);
        }
        case ArgType::boolean:
            if (v.is_boolean()) return v;
            if (v.is_string()) {
                auto s = v.get<std::string>();
                if (flowattr::detail::iequals(s, "true") || flowattr::detail::iequals(s, "false")) {
                    out.warnings.push_back(spec.name + ": coerced string \"" + s + "\" to boolean");
                    return ordered_json(flowattr::detail::iequals(s, "true"));
                }
            }
            return mismatch("expected a boolean");
        case ArgType::object: {
            ordered_json obj = v;
            if (v.is_string()) {
                obj = ordered_json::parse(v.get<std::string>(), nullptr, false);
                if (!obj.is_object()) return mismatch("expected an object");
                out.warnings.push_back(spec.name + ": parsed object from string");
            }
            if (!obj.is_object()) return mismatch("expected an object");
            ordered_json normalized = ordered_json::object();
            for (const auto& [key, val] : obj.items()) {
                if (!NodeLabel::is_valid(key)) return mismatch("invalid node label '" + key + "'");
                if (!val.is_string()) return mismatch("condition for '" + key + "' must be \"Yes\" or \"No\"");
                auto s = val.get<std::string>();
                if (flowattr::detail::iequals(s, "yes")) {
                    normalized[key] = "Yes";
                } else if (flowattr::detail::iequals(s, "no")) {
                    normalized[key] = "No";
                } else {
                    return mismatch("condition for '" + key + "' must be \"Yes\" or \"No\"");
                }
            }
            return normalized;
        }
    }
    return std::nullopt;
}

}  // namespace detail

/// Checks a call against its spec and normalizes argument values.
inline Coerced coerce(const ToolCall& call) {
    using K = ValidationIssue::Kind;
    Coerced out;
    const ToolSpec* spec = find_tool(call.tool);
    if (!spec) {
        out.issues.push_back({K::unknown_tool, "", "unknown tool '" + call.tool + "'"});
        return out;
    }
    if (!call.arguments.is_object() && !call.arguments.is_null()) {
        out.issues.push_back({K::type_mismatch, "", "arguments must be a JSON object"});
        return out;
    }
    if (call.arguments.is_object()) {
        for (const auto& [name, value] : call.arguments.items()) {
            const ArgSpec* arg = spec->find(name);
            if (!arg) {
                out.issues.push_back({K::unknown_argument, name, "unknown argument '" + name + "'"});
                continue;
            }
            if (value.is_null() && !arg->required) continue;
            if (auto v = detail::coerce_value(*arg, value, out)) out.arguments[name] = std::move(*v);
        }
    }
    for (const auto& arg : spec->arguments) {
        bool present = call.arguments.is_object() && call.arguments.contains(arg.name) &&
                       !call.arguments.at(arg.name).is_null();
        if (arg.required && !present) {
            out.issues.push_back({K::missing_argument, arg.name, "missing required argument '" + arg.name + "'"});
        }
    }
    return out;
}

inline std::vector<ValidationIssue> validate(const ToolCall& call) { return coerce(call).issues; }

// Rendered form grammar:
//   scalar statement   JSON string literal
//   degree             decimal integer
//   node item          LABEL | LABEL("json-escaped statement")
//   neighbour item     node item, optionally followed by " |Yes|", " |No|" or " |\"text\"|"
//   node list          items joined by ", "; "(none)" when empty
//   path               items joined by " -> "; "(no path)" when absent
//   max degree         LABEL=N joined by ", "
//   error              error[kind]: message
namespace detail {

inline std::string render_item(const ordered_json& item) {
    if (item.is_string()) return item.get<std::string>();
    std::string out = item.at("node").get<std::string>();
    if (item.contains("statement")) out += "(" + ordered_json(item.at("statement")).dump() + ")";
    if (item.contains("condition")) {
        auto c = condition_from_json(item.at("condition"));
        switch (c.kind()) {
            case Condition::Kind::yes: out += " |Yes|"; break;
            case Condition::Kind::no: out += " |No|"; break;
            case Condition::Kind::other: out += " |" + ordered_json(c.text()).dump() + "|"; break;
            case Condition::Kind::unconditional: break;
        }
    }
    return out;
}

inline std::string render_list(const ordered_json& items, std::string_view sep, std::string_view empty) {
    if (items.empty()) return std::string(empty);
    std::string out;
    bool first = true;
    for (const auto& it : items) {
        if (!first) out += sep;
        first = false;
        out += render_item(it);
    }
    return out;
}

class RenderedReader {
public:
    explicit RenderedReader(std::string_view s) : s_(s) {}

    bool done() const { return pos_ >= s_.size(); }

    bool eat(std::string_view t) {
        if (!s_.substr(pos_).starts_with(t)) return false;
        pos_ += t.size();
        return true;
    }

    std::string label() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        if (start == pos_) throw std::invalid_argument("expected node label in rendered text");
        return std::string(s_.substr(start, pos_ - start));
    }

    std::size_t number() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (start == pos_) throw std::invalid_argument("expected a number");
        return std::stoul(std::string(s_.substr(start, pos_ - start)));
    }

    std::string json_string() {
        if (pos_ >= s_.size() || s_[pos_] != '"') throw std::invalid_argument("expected string literal");
        std::size_t end = pos_ + 1;
        while (end < s_.size() && s_[end] != '"') end += s_[end] == '\\' ? 2 : 1;
        if (end >= s_.size()) throw std::invalid_argument("unterminated string literal");
        auto v = ordered_json::parse(s_.substr(pos_, end + 1 - pos_)).get<std::string>();
        pos_ = end + 1;
        return v;
    }

    ordered_json item(bool neighbour) {
        auto l = label();
        bool has_statement = eat("(");
        std::string statement;
        if (has_statement) {
            statement = json_string();
            if (!eat(")")) throw std::invalid_argument("expected ')'");
        }
        if (!neighbour && !has_statement) return l;
        ordered_json out = {{"node", l}};
        if (neighbour) {
            ordered_json cond = nullptr;
            if (eat(" |Yes|")) {
                cond = "yes";
            } else if (eat(" |No|")) {
                cond = "no";
            } else if (eat(" |")) {
                cond = {{"other", json_string()}};
                if (!eat("|")) throw std::invalid_argument("expected '|'");
            }
            out["condition"] = cond;
        }
        if (has_statement) out["statement"] = statement;
        return out;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline bool is_path_tool(std::string_view tool) { return tool == "path_between" || tool == "shortest_path"; }

inline bool is_list_tool(std::string_view tool) {
    return tool == "get_ancestors" || tool == "get_descendants" || tool == "bfs" || tool == "dfs";
}

/// Compact transcript form of an ok payload.
inline std::string render(std::string_view tool, const ordered_json& payload) {
    if (tool == "get_statement") return payload.dump();
    if (tool == "in_degree" || tool == "out_degree") return payload.dump();
    if (tool == "max_in_degree" || tool == "max_out_degree") {
        std::vector<std::string> parts;
        for (const auto& e : payload) parts.push_back(e[0].get<std::string>() + "=" + e[1].dump());
        return parts.empty() ? "(none)" : flowattr::detail::join(parts, ", ");
    }
    if (is_path_tool(tool)) return payload.is_null() ? "(no path)" : detail::render_list(payload, " -> ", "(no path)");
    if (tool == "final_answer") return payload.dump();
    return detail::render_list(payload, ", ", "(none)");
}

/// Inverse of render().
inline ordered_json parse_rendered(std::string_view tool, std::string_view text) {
    if (tool == "get_statement" || tool == "in_degree" || tool == "out_degree" || tool == "final_answer") {
        return ordered_json::parse(text);
    }
    detail::RenderedReader r(text);
    ordered_json out = ordered_json::array();
    if (tool == "max_in_degree" || tool == "max_out_degree") {
        if (text == "(none)") return out;
        do {
            auto l = r.label();
            if (!r.eat("=")) throw std::invalid_argument("expected '='");
            out.push_back({l, r.number()});
        } while (r.eat(", "));
        if (!r.done()) throw std::invalid_argument("trailing characters in rendered text");
        return out;
    }
    if (is_path_tool(tool)) {
        if (text == "(no path)") return nullptr;
        out.push_back(r.item(false));
        while (r.eat(" -> ")) out.push_back(r.item(false));
    } else {
        if (text == "(none)") return out;
        bool neighbour = tool == "get_neighbours";
        out.push_back(r.item(neighbour));
        while (r.eat(", ")) out.push_back(r.item(neighbour));
    }
    if (!r.done()) throw std::invalid_argument("trailing characters in rendered text");
    return out;
}

namespace detail {

inline ordered_json refs_payload(const std::vector<NodeRef>& refs) {
    ordered_json out = ordered_json::array();
    for (const auto& r : refs) {
        if (r.statement) {
            out.push_back({{"node", r.label.str()}, {"statement", *r.statement}});
        } else {
            out.push_back(r.label.str());
        }
    }
    return out;
}

inline ConditionConstraint constraint_of(const ordered_json& args) {
    ConditionConstraint c;
    if (!args.contains("conditions")) return c;
    for (const auto& [k, v] : args.at("conditions").items()) {
        c[NodeLabel(k)] = v.get<std::string>() == "Yes" ? Branch::yes : Branch::no;
    }
    return c;
}

inline ordered_json error_payload(std::string_view kind, std::string_view message) {
    return {{"kind", kind}, {"message", message}};
}

inline ordered_json execute(const std::string& tool, const ordered_json& a, const FlowChart& chart) {
    auto label = [&](const char* key) { return NodeLabel(a.at(key).get<std::string>()); };
    auto levels = [&]() -> std::optional<int> {
        if (!a.contains("levels")) return std::nullopt;
        return static_cast<int>(a.at("levels").get<long long>());
    };
    Statements st = a.value("include_statements", false) ? Statements::include : Statements::omit;
    auto start = [&]() -> std::optional<NodeLabel> {
        if (!a.contains("start_id")) return std::nullopt;
        return label("start_id");
    };

    if (tool == "get_statement") return chart.statement(label("node_id"));
    if (tool == "get_ancestors") return refs_payload(chart.ancestors(label("node_id"), levels(), st));
    if (tool == "get_descendants") return refs_payload(chart.descendants(label("node_id"), levels(), st));
    if (tool == "get_neighbours") {
        ordered_json out = ordered_json::array();
        for (const auto& n : chart.neighbours(label("node_id"), st)) {
            ordered_json item = {{"node", n.label.str()}, {"condition", condition_to_json(n.condition)}};
            if (n.statement) item["statement"] = *n.statement;
            out.push_back(std::move(item));
        }
        return out;
    }
    if (tool == "in_degree") return chart.in_degree(label("node_id"));
    if (tool == "out_degree") return chart.out_degree(label("node_id"));
    if (tool == "max_in_degree" || tool == "max_out_degree") {
        auto entries = tool == "max_in_degree" ? chart.max_in_degree() : chart.max_out_degree();
        ordered_json out = ordered_json::array();
        for (const auto& e : entries) out.push_back({e.label.str(), e.degree});
        return out;
    }
    if (tool == "bfs") return refs_payload(chart.bfs(start(), constraint_of(a), st));
    if (tool == "dfs") return refs_payload(chart.dfs(start(), constraint_of(a), st));
    if (is_path_tool(tool)) {
        auto path = tool == "path_between"
                        ? chart.path_between(label("start_id"), label("end_id"), constraint_of(a), st)
                        : chart.shortest_path(label("start_id"), label("end_id"), constraint_of(a), st);
        if (!path) return nullptr;
        return refs_payload(*path);
    }
    throw std::logic_error("no executor for tool '" + tool + "'");
}

}  // namespace detail

/// Runs one tool call against the chart. Never throws for bad calls or graph
/// errors; those come back as status=error results. final_answer is not
/// executable here; the agent loop intercepts it.
inline ToolResult dispatch(const ToolCall& call, const FlowChart& chart) {
    auto t0 = std::chrono::steady_clock::now();
    ToolResult result;
    result.call_id = call.call_id;
    auto fail = [&](std::string_view kind, std::string_view message) {
        result.status = Status::error;
        result.payload = detail::error_payload(kind, message);
        result.rendered = "error[" + std::string(kind) + "]: " + std::string(message);
    };

    auto coerced = coerce(call);
    result.warnings = coerced.warnings;
    if (!coerced.issues.empty()) {
        std::vector<std::string> msgs;
        for (const auto& i : coerced.issues) msgs.push_back(i.message);
        fail(coerced.issues.front().kind == ValidationIssue::Kind::unknown_tool ? "unknown_tool" : "invalid_arguments",
             flowattr::detail::join(msgs, "; "));
    } else if (call.tool == "final_answer") {
        fail("not_dispatchable", "final_answer is handled by the agent loop");
    } else {
        try {
            result.payload = detail::execute(call.tool, coerced.arguments, chart);
            result.rendered = render(call.tool, result.payload);
        } catch (const GraphError& e) {
            fail(to_string(e.kind()), e.what());
        }
    }
    result.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

inline ordered_json to_json(const ToolResult& r) {
    ordered_json j = {{"call_id", r.call_id},
                      {"status", to_string(r.status)},
                      {"payload", r.payload},
                      {"rendered", r.rendered},
                      {"duration_ms", r.duration_ms}};
    if (!r.warnings.empty()) j["warnings"] = r.warnings;
    return j;
}

}  // namespace flowattr::tools
