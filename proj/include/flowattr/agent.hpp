#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowattr/backend.hpp"
#include "flowattr/geometry.hpp"
#include "flowattr/graph.hpp"
#include "flowattr/prompts.hpp"
#include "flowattr/statement.hpp"
#include "flowattr/toolkit.hpp"

namespace flowattr {

inline constexpr int kTraceSchemaVersion = 1;

struct AgentConfig {
    int max_tool_cycles = 8;
    std::string backend = "scripted";
    std::string system_prompt{prompts::kSystem};
    std::string planning_prompt{prompts::kPlanning};
    ordered_json decoding = ordered_json::object();
};

enum class StepKind { planning, tool_cycle, final };

inline std::string_view to_string(StepKind k) {
    switch (k) {
        case StepKind::planning: return "planning";
        case StepKind::tool_cycle: return "tool_cycle";
        case StepKind::final: return "final";
    }
    return "planning";
}

inline std::optional<StepKind> step_kind_from_string(std::string_view s) {
    for (auto k : {StepKind::planning, StepKind::tool_cycle, StepKind::final}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

struct AgentStep {
    int index = 0;
    StepKind kind = StepKind::planning;
    std::optional<tools::ToolCall> call;
    std::optional<tools::ToolResult> result;
    std::string model_text;
    double duration_ms = 0.0;
    std::vector<NodeLabel> candidates;  // planning only
};

struct AttributionResult {
    std::vector<NodeLabel> nodes;
    std::vector<std::pair<NodeLabel, NodeLabel>> edges;
    std::vector<Region> regions;
    std::string reasoning;
};

enum class Outcome { answered, step_cap_reached, backend_error };

inline std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::answered: return "answered";
        case Outcome::step_cap_reached: return "step_cap_reached";
        case Outcome::backend_error: return "backend_error";
    }
    return "backend_error";
}

inline std::optional<Outcome> outcome_from_string(std::string_view s) {
    for (auto o : {Outcome::answered, Outcome::step_cap_reached, Outcome::backend_error}) {
        if (to_string(o) == s) return o;
    }
    return std::nullopt;
}

struct AgentTrace {
    std::string sample_id;
    QuestionType question_type = QuestionType::fact_retrieval;
    std::vector<AgentStep> steps;
    Outcome outcome = Outcome::backend_error;
    std::optional<AttributionResult> result;
    std::string error;
};

class FinalAnswerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace agent_detail {

inline std::optional<ordered_json> label_list(const ordered_json& payload, int depth = 0) {
    if (depth > 3) return std::nullopt;
    if (payload.is_array()) return payload;
    if (payload.is_string()) {
        auto parsed = ordered_json::parse(payload.get<std::string>(), nullptr, false);
        if (parsed.is_discarded()) return std::nullopt;
        return label_list(parsed, depth + 1);
    }
    if (payload.is_object()) {
        if (payload.contains("nodes")) return label_list(payload.at("nodes"), depth + 1);
        if (payload.contains("answer")) return label_list(payload.at("answer"), depth + 1);
    }
    return std::nullopt;
}

inline std::string reasoning_of(const ordered_json& payload) {
    ordered_json p = payload;
    if (p.is_string()) p = ordered_json::parse(p.get<std::string>(), nullptr, false);
    if (p.is_object() && p.contains("answer") && !p.contains("nodes")) return reasoning_of(p.at("answer"));
    if (p.is_object() && p.contains("reasoning") && p.at("reasoning").is_string()) {
        return p.at("reasoning").get<std::string>();
    }
    return {};
}

/// Labels named in a planning reply's JSON, if it has any.
inline std::vector<NodeLabel> planned_nodes(const std::string& text, const FlowChart& chart) {
    std::vector<NodeLabel> out;
    auto obj = llm::first_json_object(text);
    if (!obj || !obj->contains("nodes") || !obj->at("nodes").is_array()) return out;
    for (const auto& v : obj->at("nodes")) {
        if (!v.is_string()) continue;
        auto s = v.get<std::string>();
        if (NodeLabel::is_valid(s) && chart.contains(NodeLabel(s))) out.emplace_back(s);
    }
    return out;
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

struct Stop {
    Outcome outcome;
    std::string detail;
};

}  // namespace agent_detail

/// Reads the final_answer argument. Unknown labels are dropped and noted in
/// the reasoning; edges are the consecutive pairs the chart actually has.
inline AttributionResult parse_final_answer(const ordered_json& payload, const FlowChart& chart,
                                            const RegionMap* regions = nullptr) {
    auto list = agent_detail::label_list(payload);
    if (!list) throw FinalAnswerError("no list of node labels in final answer");

    AttributionResult out;
    out.reasoning = agent_detail::reasoning_of(payload);
    std::vector<std::string> dropped;
    for (const auto& v : *list) {
        std::string s = v.is_string() ? v.get<std::string>() : v.dump();
        s = detail::trim(s);
        if (!NodeLabel::is_valid(s) || !chart.contains(NodeLabel(s))) {
            dropped.push_back(s);
            continue;
        }
        out.nodes.emplace_back(s);
    }
    if (!dropped.empty()) {
        if (!out.reasoning.empty()) out.reasoning += "\n";
        out.reasoning += "warning: dropped labels not in chart: " + detail::join(dropped, ", ");
    }
    for (std::size_t i = 1; i < out.nodes.size(); ++i) {
        if (chart.has_edge(out.nodes[i - 1], out.nodes[i])) out.edges.emplace_back(out.nodes[i - 1], out.nodes[i]);
    }
    if (regions) {
        for (const auto& n : out.nodes) {
            const auto* r = regions->find(n);
            if (!r) throw GeometryError("region map has no region for node " + n.str());
            out.regions.push_back(*r);
        }
    }
    return out;
}

/// One attribution episode: a planning turn that sees the image, then tool
/// cycles until final_answer or the cap.
inline AgentTrace run_episode(const FlowChart& chart, const std::optional<llm::ImageAttachment>& image,
                              const Statement& statement, const RegionMap* regions, const AgentConfig& config,
                              llm::ChatBackend& backend, std::string sample_id = {}) {
    using llm::ChatMessage;
    using llm::Role;
    if (chart.empty()) throw GraphError(GraphErrorKind::empty_chart, "cannot run an episode on an empty chart");
    if (config.max_tool_cycles < 1) throw std::invalid_argument("max_tool_cycles must be at least 1");

    AgentTrace trace;
    trace.sample_id = std::move(sample_id);
    trace.question_type = statement.question_type;

    std::vector<std::string> labels;
    for (const auto& l : chart.labels()) labels.push_back(l.str());
    std::map<std::string, std::string> vars = {{"question", statement.question},
                                               {"answer", statement.answer},
                                               {"tool_schemas", tools::tool_schemas().dump(2)},
                                               {"node_labels", detail::join(labels, ", ")}};

    llm::ChatRequest req;
    req.tools = tools::tool_schemas();
    req.decoding = config.decoding;
    req.messages.push_back({Role::system, prompts::fill(config.system_prompt, vars), std::nullopt, std::nullopt,
                            std::nullopt});
    req.messages.push_back({Role::user, prompts::fill(config.planning_prompt, vars), image, std::nullopt,
                            std::nullopt});

    const int budget = config.max_tool_cycles + 2;
    int requests = 0;
    auto ask = [&]() {
        if (requests >= budget) throw agent_detail::Stop{Outcome::step_cap_reached, "request budget exhausted"};
        ++requests;
        try {
            return backend.chat(req);
        } catch (const llm::BackendError& e) {
            throw agent_detail::Stop{Outcome::backend_error, e.what()};
        }
    };
    auto next_index = [&] { return static_cast<int>(trace.steps.size()); };
    auto assign_id = [&](llm::ChatReply& r) {
        if (r.tool_call && r.tool_call->call_id.empty()) r.tool_call->call_id = "call_" + std::to_string(next_index());
    };

    try {
        auto t0 = std::chrono::steady_clock::now();
        auto plan = ask();
        AgentStep planning;
        planning.kind = StepKind::planning;
        planning.model_text = plan.text;
        planning.candidates = agent_detail::planned_nodes(plan.text, chart);
        planning.duration_ms = agent_detail::ms_since(t0);
        trace.steps.push_back(std::move(planning));
        req.messages[1].image.reset();

        assign_id(plan);
        req.messages.push_back({Role::assistant, plan.text, std::nullopt, plan.tool_call, std::nullopt});
        std::optional<tools::ToolCall> pending = plan.tool_call;
        if (!pending) req.messages.push_back({Role::user, std::string(prompts::kContinue), {}, {}, {}});

        bool nudged = false, final_retried = false;
        int cycles = 0;
        std::string carried;
        while (true) {
            tools::ToolCall call;
            std::string text;
            if (pending) {
                call = std::move(*pending);
                pending.reset();
            } else {
                auto reply = ask();
                assign_id(reply);
                req.messages.push_back({Role::assistant, reply.text, std::nullopt, reply.tool_call, std::nullopt});
                if (!reply.tool_call) {
                    if (nudged) throw agent_detail::Stop{Outcome::backend_error, "model replied without a tool call twice"};
                    nudged = true;
                    carried += reply.text + "\n";
                    req.messages.push_back({Role::user, std::string(prompts::kNeedToolCall), {}, {}, {}});
                    continue;
                }
                call = *reply.tool_call;
                text = carried + reply.text;
                carried.clear();
            }

            if (call.tool == "final_answer") {
                auto f0 = std::chrono::steady_clock::now();
                try {
                    const auto& args = call.arguments;
                    auto payload = args.is_object() && args.contains("answer") ? args.at("answer") : args;
                    auto result = parse_final_answer(payload, chart, regions);
                    AgentStep step;
                    step.index = next_index();
                    step.kind = StepKind::final;
                    step.call = call;
                    step.model_text = text;
                    step.duration_ms = agent_detail::ms_since(f0);
                    trace.steps.push_back(std::move(step));
                    trace.result = std::move(result);
                    trace.outcome = Outcome::answered;
                    return trace;
                } catch (const FinalAnswerError& e) {
                    if (final_retried) throw agent_detail::Stop{Outcome::backend_error, e.what()};
                    final_retried = true;
                    carried = text.empty() ? std::string() : text + "\n";
                    req.messages.push_back({Role::tool,
                                            prompts::fill(prompts::kBadFinalAnswer, {{"error", e.what()}}),
                                            std::nullopt, std::nullopt, call.call_id});
                    continue;
                }
            }

            if (cycles == config.max_tool_cycles) {
                throw agent_detail::Stop{Outcome::step_cap_reached,
                                         "tool cycle cap of " + std::to_string(config.max_tool_cycles) + " reached"};
            }
            ++cycles;
            auto result = tools::dispatch(call, chart);
            AgentStep step;
            step.index = next_index();
            step.kind = StepKind::tool_cycle;
            step.call = call;
            step.model_text = text;
            step.duration_ms = result.duration_ms;
            req.messages.push_back({Role::tool, result.rendered, std::nullopt, std::nullopt, call.call_id});
            step.result = std::move(result);
            trace.steps.push_back(std::move(step));
        }
    } catch (const agent_detail::Stop& stop) {
        trace.outcome = stop.outcome;
        trace.error = stop.detail;
        trace.result.reset();
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Trace JSON

inline ordered_json to_json(const AttributionResult& r) {
    ordered_json nodes = ordered_json::array(), edges = ordered_json::array(), regions = ordered_json::array();
    for (const auto& n : r.nodes) nodes.push_back(n.str());
    for (const auto& [a, b] : r.edges) edges.push_back({a.str(), b.str()});
    for (const auto& reg : r.regions) {
        ordered_json j = {{"label", reg.label.str()}};
        j.update(region_to_json(reg));
        regions.push_back(std::move(j));
    }
    return {{"nodes", nodes}, {"edges", edges}, {"regions", regions}, {"reasoning", r.reasoning}};
}

inline AttributionResult attribution_from_json(const ordered_json& j) {
    AttributionResult r;
    for (const auto& n : j.at("nodes")) r.nodes.emplace_back(n.get<std::string>());
    for (const auto& e : j.value("edges", ordered_json::array())) {
        r.edges.emplace_back(NodeLabel(e.at(0).get<std::string>()), NodeLabel(e.at(1).get<std::string>()));
    }
    for (const auto& g : j.value("regions", ordered_json::array())) {
        auto kind = region_shape_from_string(g.at("shape_kind").get<std::string>());
        if (!kind) throw GeometryError("unknown shape_kind in trace");
        Region reg{NodeLabel(g.at("label").get<std::string>()), *kind, box_from_json(g.at("bbox")), std::nullopt};
        if (g.contains("polygon")) reg.polygon = polygon_from_json(g.at("polygon"));
        r.regions.push_back(std::move(reg));
    }
    r.reasoning = j.value("reasoning", "");
    return r;
}

/// Durations vary run to run; leave them out to compare traces byte for byte.
inline ordered_json to_json(const AgentTrace& t, bool with_durations = true) {
    ordered_json steps = ordered_json::array();
    for (const auto& s : t.steps) {
        ordered_json j = {{"index", s.index}, {"kind", to_string(s.kind)}};
        if (s.kind == StepKind::planning) {
            ordered_json c = ordered_json::array();
            for (const auto& n : s.candidates) c.push_back(n.str());
            j["candidates"] = std::move(c);
        }
        if (s.call) {
            j["tool"] = s.call->tool;
            j["arguments"] = s.call->arguments;
            j["call_id"] = s.call->call_id;
        }
        if (s.result) {
            j["status"] = tools::to_string(s.result->status);
            j["rendered"] = s.result->rendered;
        }
        j["model_text"] = s.model_text;
        if (with_durations) j["duration_ms"] = s.duration_ms;
        steps.push_back(std::move(j));
    }
    ordered_json j = {{"schema_version", kTraceSchemaVersion},
                      {"sample_id", t.sample_id},
                      {"question_type", to_string(t.question_type)},
                      {"steps", std::move(steps)},
                      {"outcome", to_string(t.outcome)},
                      {"result", t.result ? to_json(*t.result) : ordered_json(nullptr)}};
    if (!t.error.empty()) j["error"] = t.error;
    return j;
}

inline AgentTrace trace_from_json(const ordered_json& j) {
    AgentTrace t;
    t.sample_id = j.at("sample_id").get<std::string>();
    auto qt = question_type_from_string(j.value("question_type", "fact_retrieval"));
    if (!qt) throw std::invalid_argument("unknown question_type in trace");
    t.question_type = *qt;
    auto outcome = outcome_from_string(j.at("outcome").get<std::string>());
    if (!outcome) throw std::invalid_argument("unknown outcome in trace");
    t.outcome = *outcome;
    for (const auto& s : j.at("steps")) {
        AgentStep step;
        step.index = s.at("index").get<int>();
        auto kind = step_kind_from_string(s.at("kind").get<std::string>());
        if (!kind) throw std::invalid_argument("unknown step kind in trace");
        step.kind = *kind;
        for (const auto& c : s.value("candidates", ordered_json::array())) step.candidates.emplace_back(c.get<std::string>());
        if (s.contains("tool")) {
            step.call = tools::ToolCall{s.at("tool").get<std::string>(), s.value("arguments", ordered_json::object()),
                                        s.value("call_id", "")};
        }
        if (s.contains("status")) {
            tools::ToolResult r;
            r.call_id = step.call ? step.call->call_id : "";
            r.status = s.at("status") == "ok" ? tools::Status::ok : tools::Status::error;
            r.rendered = s.value("rendered", "");
            r.duration_ms = s.value("duration_ms", 0.0);
            step.result = std::move(r);
        }
        step.model_text = s.value("model_text", "");
        step.duration_ms = s.value("duration_ms", 0.0);
        t.steps.push_back(std::move(step));
    }
    if (j.contains("result") && !j.at("result").is_null()) t.result = attribution_from_json(j.at("result"));
    t.error = j.value("error", "");
    return t;
}

// ---------------------------------------------------------------------------
// Tool-use statistics

struct DurationSummary {
    std::size_t count = 0;
    double min_ms = 0, median_ms = 0, max_ms = 0;
};

struct TraceStats {
    std::size_t episodes = 0;
    std::map<std::string, std::size_t> outcomes;
    // step (1-based position among the episode's tool calls) -> tool -> count
    std::map<int, std::map<std::string, std::size_t>> step_tool;
    std::map<std::string, DurationSummary> durations;
    std::map<std::string, std::map<std::string, std::size_t>> tools_by_type;
    // question type -> calls per episode -> episodes
    std::map<std::string, std::map<std::size_t, std::size_t>> calls_histogram;
};

inline TraceStats trace_stats(const std::vector<AgentTrace>& traces) {
    TraceStats st;
    std::map<std::string, std::vector<double>> samples;
    for (const auto& t : traces) {
        ++st.episodes;
        ++st.outcomes[std::string(to_string(t.outcome))];
        std::string type(to_string(t.question_type));
        std::size_t calls = 0;
        for (const auto& s : t.steps) {
            if (!s.call) continue;
            ++calls;
            ++st.step_tool[static_cast<int>(calls)][s.call->tool];
            ++st.tools_by_type[type][s.call->tool];
            samples[s.call->tool].push_back(s.duration_ms);
        }
        ++st.calls_histogram[type][calls];
    }
    for (auto& [tool, v] : samples) {
        std::sort(v.begin(), v.end());
        auto n = v.size();
        double median = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
        st.durations[tool] = {n, v.front(), median, v.back()};
    }
    return st;
}

inline ordered_json to_json(const TraceStats& st) {
    ordered_json outcomes = ordered_json::object();
    for (auto o : {Outcome::answered, Outcome::step_cap_reached, Outcome::backend_error}) {
        auto it = st.outcomes.find(std::string(to_string(o)));
        outcomes[std::string(to_string(o))] = it == st.outcomes.end() ? 0 : it->second;
    }
    ordered_json matrix = ordered_json::object();
    for (const auto& [step, tools] : st.step_tool) {
        ordered_json row = ordered_json::object();
        for (const auto& [tool, n] : tools) row[tool] = n;
        matrix[std::to_string(step)] = std::move(row);
    }
    ordered_json durations = ordered_json::object();
    for (const auto& [tool, d] : st.durations) {
        durations[tool] = {{"count", d.count}, {"min_ms", d.min_ms}, {"median_ms", d.median_ms}, {"max_ms", d.max_ms}};
    }
    ordered_json by_type = ordered_json::object();
    for (const auto& [type, tools] : st.tools_by_type) {
        ordered_json counts = ordered_json::object();
        for (const auto& [tool, n] : tools) counts[tool] = n;
        by_type[type]["tool_counts"] = std::move(counts);
    }
    for (const auto& [type, hist] : st.calls_histogram) {
        ordered_json h = ordered_json::object();
        for (const auto& [calls, n] : hist) h[std::to_string(calls)] = n;
        by_type[type]["calls_per_episode"] = std::move(h);
        if (!by_type[type].contains("tool_counts")) by_type[type]["tool_counts"] = ordered_json::object();
    }
    return {{"schema_version", kTraceSchemaVersion},
            {"episodes", st.episodes},
            {"outcomes", std::move(outcomes)},
            {"step_tool_matrix", std::move(matrix)},
            {"tool_durations", std::move(durations)},
            {"by_question_type", std::move(by_type)}};
}

}  // namespace flowattr
