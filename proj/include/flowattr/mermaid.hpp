#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "flowattr/detail/strings.hpp"
#include "flowattr/graph.hpp"

namespace flowattr::mermaid {

enum class ParseMode { strict, recover };
enum class Severity { error, warning };

inline std::string_view to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

struct ParseDiagnostic {
    int line = 0;
    Severity severity = Severity::warning;
    std::string message;
    bool recovered = false;
};

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int column, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                             message),
          line_(line),
          column_(column),
          message_(message) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }
    const std::string& message() const noexcept { return message_; }

    ParseDiagnostic diagnostic() const { return {line_, Severity::error, what(), false}; }

private:
    int line_;
    int column_;
    std::string message_;
};

struct SourceLine {
    int number = 0;  // 1-based
    std::string text;
};

/// Header plus the statement lines that follow it, comments and blanks removed.
struct MermaidDocument {
    std::string keyword = "flowchart";  // "flowchart" or "graph"
    std::string direction = "TD";       // TD | TB | LR | RL | BT
    std::vector<SourceLine> statements;
    std::string raw;
};

struct ParseResult {
    FlowChart chart;
    MermaidDocument document;
    std::vector<ParseDiagnostic> diagnostics;
};

namespace detail {

inline bool is_id_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

inline void append_utf8(std::string& out, unsigned long cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

/// Length of a Mermaid entity code "#name;" or "#123;" at s[0], or 0.
inline std::size_t entity_length(std::string_view s) {
    if (s.size() < 3 || s[0] != '#') return 0;
    std::size_t i = 1;
    while (i < s.size() && std::isalnum(static_cast<unsigned char>(s[i]))) ++i;
    if (i == 1 || i >= s.size() || s[i] != ';') return 0;
    return i + 1;
}

inline std::string unescape(std::string_view s) {
    static const std::map<std::string, std::string, std::less<>> named{
        {"quot", "\""}, {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"nbsp", " "}};
    std::string out;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t n = entity_length(s.substr(i));
        if (n == 0) {
            out += s[i++];
            continue;
        }
        std::string_view name = s.substr(i + 1, n - 2);
        if (std::all_of(name.begin(), name.end(), [](unsigned char c) { return std::isdigit(c) != 0; }) &&
            name.size() <= 7) {
            append_utf8(out, std::stoul(std::string(name)));
        } else if (auto it = named.find(name); it != named.end()) {
            out += it->second;
        } else {
            out.append(s.substr(i, n));
        }
        i += n;
    }
    return out;
}

inline std::string escape(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '"') {
            out += "#quot;";
        } else if (c == '#' && entity_length(s.substr(i)) > 0) {
            out += "#35;";
        } else if (c == '\n') {
            out += "#10;";
        } else if (c == '\r') {
            out += "#13;";
        } else {
            out += c;
        }
    }
    return out;
}

struct ShapedText {
    Shape shape;
    std::string text;
};

struct NodeSpec {
    NodeLabel label;
    std::optional<ShapedText> body;
    int column = 0;
};

struct EdgeSpec {
    Condition condition;
    int column = 0;
};

/// One statement line: node references joined by arrows.
struct LineSyntax {
    std::vector<NodeSpec> nodes;
    std::vector<EdgeSpec> edges;  // edges[i] joins nodes[i] -> nodes[i+1]
    bool dash_label = false;      // used "-- text -->" form
};

class SyntaxError : public std::runtime_error {
public:
    SyntaxError(int column, const std::string& msg) : std::runtime_error(msg), column(column) {}
    int column;
};

class LineScanner {
public:
    explicit LineScanner(std::string_view text) : s_(text) {}

    LineSyntax parse() {
        LineSyntax out;
        out.nodes.push_back(node_ref());
        skip_ws();
        while (!at_end()) {
            out.edges.push_back(arrow(out.dash_label));
            skip_ws();
            out.nodes.push_back(node_ref());
            skip_ws();
        }
        return out;
    }

private:
    bool at_end() const { return pos_ >= s_.size(); }
    int column() const { return static_cast<int>(pos_) + 1; }
    char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }
    bool looking_at(std::string_view t) const { return s_.substr(pos_).starts_with(t); }

    void skip_ws() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(column(), msg); }

    NodeSpec node_ref() {
        skip_ws();
        NodeSpec spec;
        spec.column = column();
        std::size_t start = pos_;
        while (!at_end() && is_id_char(s_[pos_])) ++pos_;
        if (pos_ == start) fail(at_end() ? "expected node id" : std::string("unexpected character '") + peek() + "'");
        spec.label = NodeLabel(std::string(s_.substr(start, pos_ - start)));

        if (looking_at("[[") || looking_at("[(") || looking_at("((") || looking_at("{{") || looking_at("[/") ||
            looking_at("[\\") || looking_at(">")) {
            fail("unsupported node shape");
        }
        if (looking_at("([")) {
            pos_ += 2;
            spec.body = ShapedText{Shape::stadium, text_until("])")};
        } else if (looking_at("[")) {
            ++pos_;
            spec.body = ShapedText{Shape::rectangle, text_until("]")};
        } else if (looking_at("(")) {
            ++pos_;
            spec.body = ShapedText{Shape::rounded, text_until(")")};
        } else if (looking_at("{")) {
            ++pos_;
            spec.body = ShapedText{Shape::diamond, text_until("}")};
        }
        return spec;
    }

    std::string text_until(std::string_view closer) {
        skip_ws();
        std::string text;
        if (peek() == '"') {
            ++pos_;
            auto end = s_.find('"', pos_);
            if (end == std::string_view::npos) fail("unterminated quoted text");
            text = unescape(s_.substr(pos_, end - pos_));
            pos_ = end + 1;
            skip_ws();
            if (!looking_at(closer)) fail("expected '" + std::string(closer) + "' after quoted text");
        } else {
            auto end = s_.find(closer, pos_);
            if (end == std::string_view::npos) fail("missing '" + std::string(closer) + "'");
            text = unescape(flowattr::detail::trim(s_.substr(pos_, end - pos_)));
            pos_ = end;
        }
        pos_ += closer.size();
        return text;
    }

    EdgeSpec arrow(bool& dash_label) {
        EdgeSpec edge;
        edge.column = column();
        if (looking_at("--") && !looking_at("---")) {
            // Either "-->" or the "-- text -->" label form.
            std::size_t probe = pos_ + 2;
            while (probe < s_.size() && s_[probe] == '-') ++probe;
            if (probe < s_.size() && s_[probe] == '>') {
                pos_ = probe + 1;
            } else {
                auto close = s_.find("-->", pos_ + 2);
                if (close == std::string_view::npos) fail("unsupported edge syntax");
                edge.condition = label_condition(s_.substr(pos_ + 2, close - pos_ - 2));
                pos_ = close + 3;
                dash_label = true;
                return edge;
            }
        } else if (looking_at("---")) {
            std::size_t probe = pos_;
            while (probe < s_.size() && s_[probe] == '-') ++probe;
            if (probe >= s_.size() || s_[probe] != '>') fail("unsupported edge syntax");
            pos_ = probe + 1;
        } else {
            fail("expected '-->'");
        }
        skip_ws();
        if (peek() == '|') {
            ++pos_;
            std::string_view raw;
            skip_ws();
            if (peek() == '"') {
                ++pos_;
                auto end = s_.find('"', pos_);
                if (end == std::string_view::npos) fail("unterminated quoted edge label");
                raw = s_.substr(pos_, end - pos_);
                pos_ = end + 1;
                skip_ws();
                if (peek() != '|') fail("expected '|' after edge label");
            } else {
                auto end = s_.find('|', pos_);
                if (end == std::string_view::npos) fail("unterminated edge label");
                raw = s_.substr(pos_, end - pos_);
                pos_ = end;
            }
            ++pos_;
            edge.condition = Condition::from_label(unescape(raw));
        }
        return edge;
    }

    static Condition label_condition(std::string_view raw) {
        auto t = flowattr::detail::trim(raw);
        if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
        return Condition::from_label(unescape(t));
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

inline bool is_out_of_grammar_keyword(std::string_view line) {
    for (std::string_view kw : {"subgraph", "end", "style", "classDef", "class", "click", "linkStyle", "direction"}) {
        if (flowattr::detail::starts_with_word(line, kw)) return true;
    }
    return false;
}

inline std::optional<std::pair<std::string, std::string>> match_header(std::string_view line) {
    std::string_view keyword;
    if (flowattr::detail::starts_with_word(line, "flowchart")) {
        keyword = "flowchart";
    } else if (flowattr::detail::starts_with_word(line, "graph")) {
        keyword = "graph";
    } else {
        return std::nullopt;
    }
    auto rest = flowattr::detail::trim(line.substr(keyword.size()));
    if (!rest.empty() && rest.back() == ';') rest = flowattr::detail::trim(rest.substr(0, rest.size() - 1));
    if (rest.empty()) return std::pair{std::string(keyword), std::string("TD")};
    for (std::string_view dir : {"TD", "TB", "LR", "RL", "BT"}) {
        if (rest == dir) return std::pair{std::string(keyword), std::string(dir)};
    }
    return std::nullopt;
}

/// Accumulates recovery notes so each repaired line yields one diagnostic.
class Repairs {
public:
    void note(int line, std::string msg) { notes_[line].push_back(std::move(msg)); }

    std::vector<ParseDiagnostic> diagnostics() const {
        std::vector<ParseDiagnostic> out;
        for (const auto& [line, msgs] : notes_) {
            out.push_back({line, Severity::warning, flowattr::detail::join(msgs, "; "), true});
        }
        return out;
    }

private:
    std::map<int, std::vector<std::string>> notes_;
};

}  // namespace detail

/// Splits source into header and statement lines.
inline MermaidDocument read_document(std::string_view source, ParseMode mode, detail::Repairs& repairs) {
    MermaidDocument doc;
    doc.raw = std::string(source);
    bool have_header = false;
    const auto lines = flowattr::detail::split_lines(source);
    for (int i = 1; i <= static_cast<int>(lines.size()); ++i) {
        auto line = flowattr::detail::trim(lines[static_cast<std::size_t>(i - 1)]);
        if (line.empty() || line.starts_with("%%")) continue;
        if (auto header = detail::match_header(line)) {
            if (!have_header && doc.statements.empty()) {
                doc.keyword = header->first;
                doc.direction = header->second;
                have_header = true;
                continue;
            }
            if (mode == ParseMode::strict) throw ParseError(i, 1, "header must appear exactly once, on the first line");
            repairs.note(i, "skipped misplaced header");
            continue;
        }
        if (!have_header && doc.statements.empty()) {
            if (mode == ParseMode::strict) {
                throw ParseError(i, 1, "expected header 'flowchart <dir>' or 'graph <dir>'");
            }
            repairs.note(i, "missing header, assumed 'flowchart TD'");
        }
        doc.statements.push_back({i, std::string(line)});
    }
    return doc;
}

/// Parses the flowchart subset: shaped node declarations, "-->" edges with
/// optional "|label|", inline declarations inside edge lines.
inline ParseResult parse(std::string_view source, ParseMode mode = ParseMode::strict) {
    if (flowattr::detail::trim(source).empty()) throw ParseError(1, 1, "empty source");
    detail::Repairs repairs;
    ParseResult result;
    result.document = read_document(source, mode, repairs);
    auto& chart = result.chart;
    const bool strict = mode == ParseMode::strict;

    for (const auto& [number, text] : result.document.statements) {
        std::string_view line = text;
        if (line.back() == ';') line = flowattr::detail::trim(line.substr(0, line.size() - 1));

        if (detail::is_out_of_grammar_keyword(line)) {
            if (strict) throw ParseError(number, 1, "unsupported statement: " + std::string(line));
            repairs.note(number, "skipped unsupported statement");
            continue;
        }

        detail::LineSyntax syntax;
        try {
            syntax = detail::LineScanner(line).parse();
        } catch (const detail::SyntaxError& e) {
            if (strict) throw ParseError(number, e.column, e.what());
            repairs.note(number, std::string("skipped unparsable line (") + e.what() + ")");
            continue;
        } catch (const GraphError& e) {
            if (strict) throw ParseError(number, 1, e.what());
            repairs.note(number, std::string("skipped unparsable line (") + e.what() + ")");
            continue;
        }

        if (syntax.edges.size() > 1) {
            if (strict) throw ParseError(number, syntax.edges[1].column, "chained edges are not supported");
            repairs.note(number, "split chained edge into " + std::to_string(syntax.edges.size()) + " edges");
        }
        if (syntax.dash_label) {
            if (strict) throw ParseError(number, syntax.edges.front().column, "use '-->|label|' for edge labels");
            repairs.note(number, "converted '-- label -->' edge");
        }

        const bool is_edge_line = !syntax.edges.empty();
        std::vector<std::string> auto_declared;
        for (const auto& spec : syntax.nodes) {
            const auto& label = spec.label;
            if (spec.body) {
                const auto& body = *spec.body;
                Shape shape = body.shape;
                if (body.text.empty()) {
                    if (strict) throw ParseError(number, spec.column, "empty text for node '" + label.str() + "'");
                    repairs.note(number, "node '" + label.str() + "' has empty text, declared with unknown shape");
                    shape = Shape::unknown;
                }
                if (!chart.contains(label)) {
                    chart.add_node(label, body.text, shape);
                    continue;
                }
                const auto& existing = chart.node(label);
                if (existing.shape == Shape::unknown && existing.statement.empty()) {
                    chart.redefine_node(label, body.text, shape);
                } else if (existing.shape != shape || existing.statement != body.text) {
                    if (strict) {
                        throw ParseError(number, spec.column, "conflicting redeclaration of node '" + label.str() + "'");
                    }
                    repairs.note(number, "kept first declaration of node '" + label.str() + "'");
                }
            } else if (!chart.contains(label)) {
                if (!is_edge_line) {
                    chart.add_node(label, "", Shape::unknown);
                } else if (strict) {
                    throw ParseError(number, spec.column, "edge references undeclared node '" + label.str() + "'");
                } else {
                    chart.add_node(label, "", Shape::unknown);
                    auto_declared.push_back(label.str());
                }
            }
        }
        if (!auto_declared.empty()) {
            repairs.note(number, "auto-declared node(s) " + flowattr::detail::join(auto_declared, ", "));
        }

        for (std::size_t k = 0; k < syntax.edges.size(); ++k) {
            const auto& from = syntax.nodes[k].label;
            const auto& to = syntax.nodes[k + 1].label;
            try {
                chart.add_edge(from, to, syntax.edges[k].condition);
            } catch (const GraphError& e) {
                if (strict) throw ParseError(number, syntax.edges[k].column, e.what());
                repairs.note(number, std::string("skipped ") + e.what());
            }
        }
    }

    if (chart.empty()) {
        int last = result.document.statements.empty() ? 1 : result.document.statements.back().number;
        throw ParseError(last, 1, "chart has no nodes");
    }
    result.diagnostics = repairs.diagnostics();
    return result;
}

inline std::string node_declaration(const Node& n) {
    std::string text = "\"" + detail::escape(n.statement) + "\"";
    switch (n.shape) {
        case Shape::rectangle: return n.label.str() + "[" + text + "]";
        case Shape::diamond: return n.label.str() + "{" + text + "}";
        case Shape::rounded: return n.label.str() + "(" + text + ")";
        case Shape::stadium: return n.label.str() + "([" + text + "])";
        case Shape::unknown: break;
    }
    return n.label.str();
}

/// Canonical text: header, node declarations in insertion order, then edges
/// in insertion order.
inline std::string serialize(const FlowChart& chart, std::string_view direction = "TD") {
    std::string out = "flowchart " + std::string(direction) + "\n";
    for (const auto& n : chart.nodes()) out += "    " + node_declaration(n) + "\n";
    for (const auto& e : chart.edges()) {
        out += "    " + e.from.str() + " -->";
        switch (e.condition.kind()) {
            case Condition::Kind::yes: out += "|Yes|"; break;
            case Condition::Kind::no: out += "|No|"; break;
            case Condition::Kind::other: out += "|\"" + detail::escape(e.condition.text()) + "\"|"; break;
            case Condition::Kind::unconditional: break;
        }
        out += " " + e.to.str() + "\n";
    }
    return out;
}

}  // namespace flowattr::mermaid
