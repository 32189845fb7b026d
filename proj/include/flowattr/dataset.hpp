#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowattr/detail/strings.hpp"
#include "flowattr/geometry.hpp"
#include "flowattr/graph.hpp"
#include "flowattr/layout.hpp"
#include "flowattr/mermaid.hpp"
#include "flowattr/statement.hpp"
#include "flowattr/styles.hpp"
#include "flowattr/svg.hpp"

namespace flowattr {

inline constexpr int kSchemaVersion = 1;

enum class Split { code, wiki, instruct, custom };

inline constexpr Split kSplits[] = {Split::code, Split::wiki, Split::instruct, Split::custom};

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::code: return "code";
        case Split::wiki: return "wiki";
        case Split::instruct: return "instruct";
        case Split::custom: return "custom";
    }
    return "custom";
}

inline std::optional<Split> split_from_string(std::string_view s) {
    for (auto v : kSplits) {
        if (to_string(v) == s) return v;
    }
    return std::nullopt;
}

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct QASample {
    std::string id;
    std::string mermaid;
    Statement statement;
    Split split = Split::custom;
    StyleFamily style = StyleFamily::default_;
    std::vector<NodeLabel> gt_nodes;
    RegionMap regions;
    std::optional<std::string> image_path;

    bool operator==(const QASample&) const = default;
};

inline nlohmann::ordered_json to_json(const QASample& s) {
    nlohmann::ordered_json gt = nlohmann::ordered_json::array();
    for (const auto& l : s.gt_nodes) gt.push_back(l.str());
    nlohmann::ordered_json j = {
        {"schema_version", kSchemaVersion},
        {"id", s.id},
        {"mermaid", s.mermaid},
        {"question", s.statement.question},
        {"answer", s.statement.answer},
        {"question_type", to_string(s.statement.question_type)},
        {"split", to_string(s.split)},
        {"style", to_string(s.style)},
        {"gt_nodes", std::move(gt)},
        {"regions", to_json(s.regions)},
    };
    if (s.image_path) j["image_path"] = *s.image_path;
    return j;
}

/// Checks gt_nodes against the chart and the region map against its nodes.
inline void validate_sample(const QASample& s, const FlowChart& chart) {
    for (const auto& l : s.gt_nodes) {
        if (!chart.contains(l)) throw DatasetError("sample " + s.id + ": gt node '" + l.str() + "' not in chart");
    }
    if (!s.regions.empty()) {
        if (s.regions.size() != chart.node_count()) {
            throw DatasetError("sample " + s.id + ": region map does not cover the chart");
        }
        for (const auto& l : chart.labels()) {
            if (!s.regions.find(l)) throw DatasetError("sample " + s.id + ": no region for '" + l.str() + "'");
        }
    }
}

inline QASample sample_from_json(const nlohmann::ordered_json& j) {
    try {
        if (j.contains("schema_version") && j.at("schema_version").get<int>() > kSchemaVersion) {
            throw DatasetError("unsupported schema_version " + j.at("schema_version").dump());
        }
        QASample s;
        s.id = j.at("id").get<std::string>();
        s.mermaid = j.at("mermaid").get<std::string>();
        auto type_name = j.at("question_type").get<std::string>();
        auto type = question_type_from_string(type_name);
        if (!type) throw DatasetError("unknown question_type '" + type_name + "'");
        s.statement = Statement(j.at("question").get<std::string>(), j.at("answer").get<std::string>(), *type);
        auto split = split_from_string(j.at("split").get<std::string>());
        if (!split) throw DatasetError("unknown split " + j.at("split").dump());
        s.split = *split;
        auto style = style_family_from_string(j.at("style").get<std::string>());
        if (!style) throw DatasetError("unknown style " + j.at("style").dump());
        s.style = *style;
        for (const auto& l : j.at("gt_nodes")) s.gt_nodes.emplace_back(l.get<std::string>());
        if (j.contains("regions") && !j.at("regions").is_null()) s.regions = region_map_from_json(j.at("regions"));
        if (j.contains("image_path") && !j.at("image_path").is_null()) {
            s.image_path = j.at("image_path").get<std::string>();
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(std::string("malformed sample: ") + e.what());
    } catch (const GraphError& e) {
        throw DatasetError(std::string("malformed sample: ") + e.what());
    } catch (const GeometryError& e) {
        throw DatasetError(std::string("malformed sample: ") + e.what());
    }
}

/// Reads a JSON Lines dataset; blank lines are skipped. Samples are
/// validated against their own Mermaid source.
inline std::vector<QASample> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot read " + path.string());
    std::vector<QASample> out;
    std::set<std::string> ids;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (flowattr::detail::trim(line).empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DatasetError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
        auto s = sample_from_json(j);
        try {
            validate_sample(s, mermaid::parse(s.mermaid, mermaid::ParseMode::recover).chart);
        } catch (const mermaid::ParseError& e) {
            throw DatasetError("sample " + s.id + ": " + e.what());
        }
        if (!ids.insert(s.id).second) throw DatasetError("duplicate sample id " + s.id);
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_dataset(const std::filesystem::path& path, const std::vector<QASample>& samples) {
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write " + path.string());
    for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

struct AssembleOptions {
    Split split = Split::custom;
    std::string direction = "TD";
    bool overlay_labels = true;
    std::optional<std::filesystem::path> svg_dir;  // when set, <id>.svg is written there
};

struct AssembledSample {
    QASample sample;
    std::string svg;
};

inline AssembledSample assemble_sample(const FlowChart& chart, const Statement& statement,
                                       const std::vector<NodeLabel>& gt_nodes, const StyleSpec& style,
                                       std::uint64_t seed, const AssembleOptions& options = {}) {
    for (const auto& l : gt_nodes) {
        if (!chart.contains(l)) throw GraphError(GraphErrorKind::unknown_node, "gt node '" + l.str() + "' not in chart");
    }
    AssembledSample out;
    auto& s = out.sample;
    s.mermaid = mermaid::serialize(chart, options.direction);
    s.statement = statement;
    s.split = options.split;
    s.style = style.family;
    s.gt_nodes = gt_nodes;

    std::string key = s.mermaid + '\x1f' + statement.question + '\x1f' + statement.answer + '\x1f' +
                      std::string(to_string(statement.question_type)) + '\x1f' + std::string(to_string(style.family)) +
                      '\x1f' + std::to_string(seed);
    s.id = std::string(to_string(options.split)) + "-" + flowattr::detail::hex64(flowattr::detail::fnv1a(key));

    auto rendered = render_svg(chart, layout(chart, direction_from_token(options.direction)), style,
                               options.overlay_labels);
    s.regions = std::move(rendered.regions);
    out.svg = std::move(rendered.svg);
    if (options.svg_dir) {
        std::filesystem::create_directories(*options.svg_dir);
        auto file = *options.svg_dir / (s.id + ".svg");
        std::ofstream f(file, std::ios::binary);
        if (!f) throw DatasetError("cannot write " + file.string());
        f << out.svg;
        s.image_path = file.string();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic charts and statements

namespace synth {

inline constexpr std::array<const char*, 15> kVerbs = {"Read",  "Validate", "Compute", "Store", "Send",
                                                       "Update", "Load",    "Parse",   "Log",   "Sort",
                                                       "Merge", "Fetch",    "Print",   "Reset", "Archive"};
inline constexpr std::array<const char*, 15> kNouns = {
    "input value", "user record", "running total", "retry counter", "request",   "config file", "order",
    "payment",     "daily report", "cache entry",  "search index",  "message",   "queue item",  "score",
    "balance"};
inline constexpr std::array<const char*, 4> kChecks = {"Is the {} valid?", "Is the {} above the limit?",
                                                      "Does the {} exist?", "Is the {} complete?"};

inline std::string pick(std::mt19937_64& rng, const auto& table) { return table[rng() % table.size()]; }

inline std::string fill(std::string pattern, const std::string& noun) {
    auto pos = pattern.find("{}");
    return pattern.replace(pos, 2, noun);
}

}  // namespace synth

/// Random connected chart with `nodes` nodes: a Start terminal, process and
/// decision steps, an End terminal, and occasional loops back to earlier steps.
inline FlowChart generate_chart(std::uint64_t seed, int nodes) {
    if (nodes < 2) throw GraphError(GraphErrorKind::invalid_argument, "a generated chart needs at least 2 nodes");
    std::mt19937_64 rng(seed);
    FlowChart g;
    struct Slot {
        std::size_t node;
        Condition condition;
    };
    std::vector<Slot> open;
    const auto n = static_cast<std::size_t>(nodes);
    g.add_node(alpha_label(0), "Start", Shape::stadium);
    open.push_back({0, Condition::unconditional()});
    for (std::size_t i = 1; i + 1 < n; ++i) {
        auto noun = synth::pick(rng, synth::kNouns);
        Slot slot = open[rng() % open.size()];
        open.erase(std::find_if(open.begin(), open.end(), [&](const Slot& s) {
            return s.node == slot.node && s.condition == slot.condition;
        }));
        auto roll = rng() % 10;
        if (roll < 3) {
            g.add_node(alpha_label(i), synth::fill(synth::pick(rng, synth::kChecks), noun), Shape::diamond);
            open.push_back({i, Condition::yes()});
            open.push_back({i, Condition::no()});
        } else {
            g.add_node(alpha_label(i), synth::pick(rng, synth::kVerbs) + " the " + noun,
                       roll == 3 ? Shape::rounded : Shape::rectangle);
            open.push_back({i, Condition::unconditional()});
        }
        g.add_edge(alpha_label(slot.node), alpha_label(i), slot.condition);
    }
    const auto end = alpha_label(n - 1);
    g.add_node(end, "End", Shape::stadium);
    for (const auto& slot : open) {
        NodeLabel target = end;
        // Only a No branch loops back; its Yes sibling still leads towards End.
        if (slot.condition == Condition::no() && slot.node > 1 && rng() % 3 == 0) {
            target = alpha_label(1 + rng() % (slot.node - 1));
        }
        g.add_edge(alpha_label(slot.node), target, slot.condition);
    }
    return g;
}

struct SynthesizedStatement {
    Statement statement;
    std::vector<NodeLabel> gt_nodes;
};

namespace synth {

inline std::string quoted(const FlowChart& g, const NodeLabel& l) { return "'" + g.statement(l) + "'"; }

inline std::vector<NodeLabel> to_labels(const std::vector<NodeRef>& refs) { return labels_of(refs); }

inline std::optional<SynthesizedStatement> fact(const FlowChart& g, std::mt19937_64& rng) {
    auto labels = g.labels();
    std::vector<NodeLabel> candidates;
    for (const auto& l : labels) {
        if (g.in_degree(l) > 0) candidates.push_back(l);
    }
    if (candidates.empty()) return std::nullopt;
    auto x = candidates[rng() % candidates.size()];
    auto p = g.ancestors(x, 1).front().label;
    return SynthesizedStatement{
        Statement("According to the flowchart, which step can come directly after the step " + quoted(g, p) + "?",
                  g.statement(x), QuestionType::fact_retrieval),
        {p, x}};
}

inline std::optional<SynthesizedStatement> referential(const FlowChart& g, std::mt19937_64& rng) {
    auto labels = g.labels();
    for (int attempt = 0; attempt < 20; ++attempt) {
        auto x = labels[rng() % labels.size()];
        auto desc = g.descendants(x);
        if (desc.size() < 2) continue;
        auto y = desc[1 + rng() % (desc.size() - 1)].label;
        auto path = g.shortest_path(x, y);
        if (!path || path->size() < 3) continue;
        std::vector<std::string> middle;
        for (std::size_t i = 1; i + 1 < path->size(); ++i) middle.push_back(g.statement((*path)[i].label));
        return SynthesizedStatement{
            Statement("Going from the step " + quoted(g, x) + " to the step " + quoted(g, y) +
                          ", which steps does the process pass through on its shortest route?",
                      "It passes through " + flowattr::detail::join(middle, ", then "),
                      QuestionType::flow_referential),
            to_labels(*path)};
    }
    return std::nullopt;
}

inline std::optional<SynthesizedStatement> scenario(const FlowChart& g, std::mt19937_64& rng) {
    auto start = g.default_start();
    std::vector<NodeLabel> decisions;
    for (const auto& r : g.bfs(start)) {
        if (g.node(r.label).shape == Shape::diamond) decisions.push_back(r.label);
    }
    if (decisions.empty()) return std::nullopt;
    auto d = decisions[rng() % decisions.size()];
    Branch branch = rng() % 2 == 0 ? Branch::yes : Branch::no;
    Condition want = branch == Branch::yes ? Condition::yes() : Condition::no();
    std::optional<NodeLabel> next;
    for (const auto& nb : g.neighbours(d)) {
        if (nb.condition == want) {
            next = nb.label;
            break;
        }
    }
    if (!next) return std::nullopt;
    auto path = g.shortest_path(start, d);
    if (!path) return std::nullopt;
    auto gt = to_labels(*path);
    if (std::find(gt.begin(), gt.end(), *next) == gt.end()) gt.push_back(*next);
    return SynthesizedStatement{
        Statement("Suppose a run begins at " + quoted(g, start) + " and the check " + quoted(g, d) +
                      " is answered with " + want.display() + ". What happens right after that check?",
                  g.statement(*next), QuestionType::applied_scenario),
        std::move(gt)};
}

inline std::optional<SynthesizedStatement> topological(const FlowChart& g, std::mt19937_64& rng) {
    bool incoming = rng() % 2 == 0;
    auto top = incoming ? g.max_in_degree() : g.max_out_degree();
    if (top.empty() || top.front().degree == 0) return std::nullopt;
    std::vector<NodeLabel> gt;
    std::vector<std::string> names;
    for (const auto& e : top) {
        gt.push_back(e.label);
        names.push_back(g.statement(e.label));
    }
    return SynthesizedStatement{
        Statement(std::string("In this flowchart, which step has the largest number of ") +
                      (incoming ? "incoming" : "outgoing") + " connections?",
                  flowattr::detail::join(names, " and "), QuestionType::topological),
        std::move(gt)};
}

}  // namespace synth

/// Builds a question of the requested type with its ground-truth path;
/// falls back to other types when the chart cannot support it.
inline SynthesizedStatement synthesize_statement(const FlowChart& chart, QuestionType type, std::mt19937_64& rng) {
    using Maker = std::optional<SynthesizedStatement> (*)(const FlowChart&, std::mt19937_64&);
    auto maker = [](QuestionType t) -> Maker {
        switch (t) {
            case QuestionType::fact_retrieval: return synth::fact;
            case QuestionType::applied_scenario: return synth::scenario;
            case QuestionType::flow_referential: return synth::referential;
            case QuestionType::topological: return synth::topological;
        }
        return synth::fact;
    };
    for (QuestionType t : {type, QuestionType::fact_retrieval, QuestionType::topological}) {
        if (auto s = maker(t)(chart, rng)) return *s;
    }
    throw GraphError(GraphErrorKind::invalid_argument, "chart too small to ask about");
}

struct SynthesisOptions {
    int count = 50;
    std::uint64_t seed = 0;
    int min_nodes = 5;
    int max_nodes = 44;
    std::optional<StyleFamily> family;  // unset: cycle through all four families
    std::optional<Split> split;         // unset: cycle through code, wiki, instruct
    std::optional<std::filesystem::path> svg_dir;
};

inline std::vector<AssembledSample> synthesize_dataset(const SynthesisOptions& o) {
    static constexpr StyleFamily families[] = {StyleFamily::single_color, StyleFamily::multi_color,
                                               StyleFamily::default_, StyleFamily::black_white};
    static constexpr Split splits[] = {Split::code, Split::wiki, Split::instruct};
    std::vector<AssembledSample> out;
    for (int i = 0; i < o.count; ++i) {
        std::uint64_t seed = o.seed * 1000003ull + static_cast<std::uint64_t>(i);
        std::mt19937_64 rng(seed);
        int span = o.max_nodes - o.min_nodes + 1;
        int nodes = o.min_nodes + static_cast<int>(rng() % static_cast<std::uint64_t>(span));
        if (i == 0) nodes = o.max_nodes;
        if (i == 1) nodes = o.min_nodes;
        auto chart = generate_chart(rng(), nodes);
        auto type = kQuestionTypes[static_cast<std::size_t>(i) % 4];
        auto st = synthesize_statement(chart, type, rng);
        auto family = o.family.value_or(families[static_cast<std::size_t>(i) % 4]);
        AssembleOptions ao;
        ao.split = o.split.value_or(splits[static_cast<std::size_t>(i) % 3]);
        ao.svg_dir = o.svg_dir;
        out.push_back(assemble_sample(chart, st.statement, st.gt_nodes, make_style(family, seed), seed, ao));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct SplitStats {
    std::size_t flowcharts = 0;
    std::size_t questions = 0;
    std::map<QuestionType, std::size_t> by_type;
    double avg_nodes = 0;
    std::size_t max_nodes = 0;
    double avg_path_length = 0;
    std::size_t max_path_length = 0;
    double avg_words_question = 0;
    double avg_words_answer = 0;
};

struct DatasetStats {
    std::map<Split, SplitStats> splits;
    SplitStats overall;
};

inline DatasetStats dataset_stats(const std::vector<QASample>& samples) {
    std::map<std::string, std::size_t> node_counts;
    auto nodes_of = [&](const std::string& src) {
        auto it = node_counts.find(src);
        if (it != node_counts.end()) return it->second;
        std::size_t n = mermaid::parse(src, mermaid::ParseMode::recover).chart.node_count();
        node_counts.emplace(src, n);
        return n;
    };
    auto compute = [&](auto&& include) {
        SplitStats s;
        for (auto t : kQuestionTypes) s.by_type[t] = 0;
        std::set<std::string> charts;
        double nodes = 0, path = 0, wq = 0, wa = 0;
        for (const auto& q : samples) {
            if (!include(q)) continue;
            ++s.questions;
            ++s.by_type[q.statement.question_type];
            path += static_cast<double>(q.gt_nodes.size());
            s.max_path_length = std::max(s.max_path_length, q.gt_nodes.size());
            wq += static_cast<double>(flowattr::detail::count_words(q.statement.question));
            wa += static_cast<double>(flowattr::detail::count_words(q.statement.answer));
            if (charts.insert(q.mermaid).second) {
                auto n = nodes_of(q.mermaid);
                nodes += static_cast<double>(n);
                s.max_nodes = std::max(s.max_nodes, n);
            }
        }
        s.flowcharts = charts.size();
        if (s.questions > 0) {
            auto q = static_cast<double>(s.questions);
            s.avg_path_length = path / q;
            s.avg_words_question = wq / q;
            s.avg_words_answer = wa / q;
            s.avg_nodes = nodes / static_cast<double>(s.flowcharts);
        }
        return s;
    };
    DatasetStats out;
    for (auto split : kSplits) out.splits[split] = compute([&](const QASample& q) { return q.split == split; });
    out.overall = compute([](const QASample&) { return true; });
    return out;
}

inline nlohmann::ordered_json to_json(const SplitStats& s) {
    nlohmann::ordered_json types = nlohmann::ordered_json::object();
    for (auto t : kQuestionTypes) types[std::string(to_string(t))] = s.by_type.at(t);
    return {
        {"num_flowcharts", s.flowcharts},
        {"num_questions", s.questions},
        {"question_types", std::move(types)},
        {"avg_nodes", s.avg_nodes},
        {"max_nodes", s.max_nodes},
        {"avg_attributed_path_length", s.avg_path_length},
        {"max_attributed_path_length", s.max_path_length},
        {"avg_words_question", s.avg_words_question},
        {"avg_words_answer", s.avg_words_answer},
    };
}

inline nlohmann::ordered_json to_json(const DatasetStats& d) {
    nlohmann::ordered_json j = {{"schema_version", kSchemaVersion}};
    for (auto split : kSplits) j[std::string(to_string(split))] = to_json(d.splits.at(split));
    j["overall"] = to_json(d.overall);
    return j;
}

}  // namespace flowattr
