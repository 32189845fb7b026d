#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "flowattr/agent.hpp"
#include "flowattr/backend.hpp"
#include "flowattr/dataset.hpp"
#include "flowattr/eval.hpp"
#include "flowattr/graph_json.hpp"
#include "flowattr/http_backend.hpp"
#include "flowattr/mermaid.hpp"
#include "flowattr/toolkit.hpp"

namespace fs = std::filesystem;
using namespace flowattr;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kIo = 1, kUsage = 2, kBackend = 3 };

struct Failure : std::runtime_error {
    Failure(Exit code, const std::string& what) : std::runtime_error(what), code(code) {}
    Exit code;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure(kIo, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Failure(kIo, "cannot write " + path.string());
    out << text;
}

/// Writes to `path`, or stdout when it is empty.
void emit(const std::string& path, const ordered_json& j) {
    if (path.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        write_file(path, j.dump(2) + "\n");
    }
}

void print_diagnostics(const std::string& source, const std::vector<mermaid::ParseDiagnostic>& diags) {
    for (const auto& d : diags) {
        std::cerr << source << ":" << d.line << ": " << mermaid::to_string(d.severity) << ": " << d.message << '\n';
    }
}

FlowChart load_graph(const fs::path& path) {
    auto text = read_file(path);
    if (path.extension() == ".json") {
        try {
            auto j = ordered_json::parse(text);
            return chart_from_json(j.contains("graph") ? j.at("graph") : j);
        } catch (const std::exception& e) {
            throw Failure(kIo, path.string() + ": " + e.what());
        }
    }
    try {
        auto r = mermaid::parse(text, mermaid::ParseMode::recover);
        print_diagnostics(path.string(), r.diagnostics);
        return std::move(r.chart);
    } catch (const mermaid::ParseError& e) {
        throw Failure(kIo, path.string() + ": " + e.what());
    }
}

std::vector<QASample> load_dataset(const fs::path& path) {
    try {
        return read_dataset(path);
    } catch (const DatasetError& e) {
        throw Failure(kIo, e.what());
    }
}

std::string file_safe(const std::string& id) {
    std::string out = id;
    for (auto& c : out) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    }
    return out;
}

// ---------------------------------------------------------------------------
// parse

struct ParseOpts {
    std::string input, out;
    bool strict = false, recover = false;
};

int cmd_parse(const ParseOpts& o) {
    auto text = read_file(o.input);
    auto mode = o.recover ? mermaid::ParseMode::recover : mermaid::ParseMode::strict;
    mermaid::ParseResult r;
    try {
        r = mermaid::parse(text, mode);
    } catch (const mermaid::ParseError& e) {
        std::cerr << o.input << ":" << e.line() << ": error: " << e.message() << '\n';
        return kIo;
    }
    print_diagnostics(o.input, r.diagnostics);
    ordered_json j = {{"schema_version", kSchemaVersion}, {"direction", r.document.direction}};
    j.update(to_json(r.chart));
    emit(o.out, j);
    return kOk;
}

// ---------------------------------------------------------------------------
// tool

struct ToolOpts {
    std::string graph, name, args = "{}", out;
};

int cmd_tool(const ToolOpts& o) {
    auto chart = load_graph(o.graph);
    auto args = ordered_json::parse(o.args, nullptr, false);
    if (args.is_discarded()) throw Failure(kUsage, "--args is not valid JSON");
    tools::ToolCall call{o.name, args, "cli"};
    if (auto issues = tools::validate(call); !issues.empty()) {
        for (const auto& i : issues) std::cerr << "invalid call: " << i.message << '\n';
        return kUsage;
    }
    if (o.name == "final_answer") throw Failure(kUsage, "final_answer is only meaningful inside an episode");
    auto result = tools::dispatch(call, chart);
    ordered_json j = {{"schema_version", kSchemaVersion}, {"tool", o.name}};
    j.update(tools::to_json(result));
    emit(o.out, j);
    return kOk;
}

// ---------------------------------------------------------------------------
// attribute

struct AttributeOpts {
    std::string dataset, backend = "http", traces, preds, config, cassette, script, record;
    std::string endpoint, model;
    int max_steps = 8;
    int concurrency = 0;  // 0: backend config decides (1 for offline backends)
    bool verbose = false;
};

std::vector<llm::ChatReply> replies_from_json(const ordered_json& j) {
    std::vector<llm::ChatReply> out;
    for (const auto& r : j) out.push_back(llm::reply_from_json(r));
    return out;
}

/// Builds the backend used for one sample. Shared backends are created once.
class BackendFactory {
public:
    explicit BackendFactory(const AttributeOpts& o) : kind_(o.backend) {
        if (kind_ == "http") {
            llm::HttpConfig cfg;
            try {
                cfg = llm::load_http_config(o.config.empty() ? std::nullopt : std::optional<fs::path>(o.config));
            } catch (const llm::ConfigError& e) {
                throw Failure(kBackend, e.what());
            }
            if (!o.endpoint.empty()) cfg.endpoint = o.endpoint;
            if (!o.model.empty()) cfg.model = o.model;
            if (!cfg.configured()) {
                throw Failure(kBackend, "http backend needs an endpoint and a model (FLOWATTR_ENDPOINT, FLOWATTR_MODEL)");
            }
            decoding_ = cfg.decoding;
            concurrency_ = cfg.concurrency;
            llm::HttpBackend::LogSink log;
            if (o.verbose) log = [](const std::string& line) { std::cerr << line << '\n'; };
            try {
                shared_ = std::make_shared<llm::HttpBackend>(cfg, log);
            } catch (const llm::ConfigError& e) {
                throw Failure(kBackend, e.what());
            }
        } else if (kind_ == "replay") {
            if (o.cassette.empty()) throw Failure(kUsage, "--backend replay needs --cassette");
            try {
                shared_ = std::make_shared<llm::ReplayBackend>(o.cassette);
            } catch (const std::exception& e) {
                throw Failure(kBackend, e.what());
            }
        } else if (kind_ == "script") {
            if (o.script.empty()) throw Failure(kUsage, "--backend script needs --script");
            auto j = ordered_json::parse(read_file(o.script), nullptr, false);
            if (j.is_discarded()) throw Failure(kIo, o.script + " is not valid JSON");
            try {
                if (j.is_array()) {
                    common_script_ = replies_from_json(j);
                } else {
                    for (const auto& [id, replies] : j.items()) per_sample_[id] = replies_from_json(replies);
                }
            } catch (const nlohmann::json::exception& e) {
                throw Failure(kIo, o.script + ": " + e.what());
            }
        } else if (kind_ != "oracle") {
            throw Failure(kUsage, "unknown backend '" + kind_ + "'");
        }
        if (!o.record.empty()) {
            if (!shared_) throw Failure(kUsage, "--record needs a shared backend (http or replay)");
            shared_ = std::make_shared<llm::RecordingBackend>(shared_, o.record);
        }
    }

    std::shared_ptr<llm::ChatBackend> for_sample(const QASample& s) const {
        if (shared_) return shared_;
        if (kind_ == "oracle") return oracle(s);
        auto it = per_sample_.find(s.id);
        return llm::ScriptedBackend::of(it != per_sample_.end() ? it->second : common_script_);
    }

    const ordered_json& decoding() const { return decoding_; }
    int concurrency() const { return concurrency_; }

private:
    // Answers with the ground truth after one lookup.
    static std::shared_ptr<llm::ChatBackend> oracle(const QASample& s) {
        ordered_json nodes = ordered_json::array();
        for (const auto& l : s.gt_nodes) nodes.push_back(l.str());
        ordered_json plan = {{"nodes", nodes}, {"rationale", "ground truth"}};
        std::vector<llm::ChatReply> script{llm::say(plan.dump())};
        if (!s.gt_nodes.empty()) script.push_back(llm::call("get_statement", {{"node_id", s.gt_nodes.front().str()}}));
        script.push_back(llm::call("final_answer", {{"answer", {{"nodes", nodes}, {"reasoning", "ground truth"}}}}));
        return llm::ScriptedBackend::of(std::move(script));
    }

    std::string kind_;
    int concurrency_ = 1;
    std::shared_ptr<llm::ChatBackend> shared_;
    std::vector<llm::ChatReply> common_script_;
    std::map<std::string, std::vector<llm::ChatReply>> per_sample_;
    ordered_json decoding_ = ordered_json::object();
};

std::optional<llm::ImageAttachment> image_for(const QASample& s, const fs::path& base, const mermaid::ParseResult& parsed) {
    if (s.image_path) {
        fs::path p(*s.image_path);
        if (p.is_relative()) p = base / p;
        if (fs::exists(p)) return llm::load_image(p);
    }
    const auto& chart = parsed.chart;
    auto dir = direction_from_token(parsed.document.direction);
    auto rendered = render_svg(chart, layout(chart, dir), make_style(s.style, 0), true);
    return llm::ImageAttachment{"image/svg+xml", llm::base64_encode(rendered.svg)};
}

std::optional<AgentTrace> read_trace(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    try {
        return trace_from_json(ordered_json::parse(read_file(path)));
    } catch (const std::exception& e) {
        std::cerr << "ignoring unreadable trace " << path.string() << ": " << e.what() << '\n';
        return std::nullopt;
    }
}

int cmd_attribute(const AttributeOpts& o) {
    if (o.traces.empty()) throw Failure(kUsage, "--traces is required");
    auto dataset = load_dataset(o.dataset);
    BackendFactory factory(o);
    fs::create_directories(o.traces);
    auto trace_path = [&](const QASample& s) { return fs::path(o.traces) / (file_safe(s.id) + ".json"); };

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto t = read_trace(trace_path(dataset[i]));
        if (!t || t->outcome == Outcome::backend_error) todo.push_back(i);
    }
    std::cerr << "attribute: " << todo.size() << " to run, " << dataset.size() - todo.size() << " already traced\n";

    AgentConfig cfg;
    cfg.max_tool_cycles = o.max_steps;
    cfg.backend = o.backend;
    cfg.decoding = factory.decoding();

    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < todo.size(); k = next++) {
            const auto& s = dataset[todo[k]];
            AgentTrace trace;
            try {
                auto parsed = mermaid::parse(s.mermaid, mermaid::ParseMode::recover);
                const RegionMap* regions = s.regions.empty() ? nullptr : &s.regions;
                auto image = image_for(s, fs::path(o.dataset).parent_path(), parsed);
                auto backend = factory.for_sample(s);
                trace = run_episode(parsed.chart, image, s.statement, regions, cfg, *backend, s.id);
            } catch (const std::exception& e) {
                trace.sample_id = s.id;
                trace.question_type = s.statement.question_type;
                trace.outcome = Outcome::backend_error;
                trace.error = e.what();
            }
            write_file(trace_path(s), to_json(trace).dump(2) + "\n");
            std::lock_guard lock(log_mutex);
            std::cerr << s.id << ": " << to_string(trace.outcome);
            if (!trace.error.empty()) std::cerr << " (" << trace.error << ")";
            std::cerr << '\n';
        }
    };
    int wanted = o.concurrency > 0 ? o.concurrency : factory.concurrency();
    int n = std::max(1, std::min<int>(wanted, static_cast<int>(todo.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::vector<PredictionRecord> preds;
    std::size_t completed = 0;
    for (const auto& s : dataset) {
        auto t = read_trace(trace_path(s));
        if (!t) continue;
        if (t->outcome != Outcome::backend_error) ++completed;
        if (t->outcome == Outcome::answered && t->result) {
            preds.push_back({s.id, t->result->nodes, std::nullopt});
        }
    }
    if (!o.preds.empty()) {
        if (fs::path(o.preds).has_parent_path()) fs::create_directories(fs::path(o.preds).parent_path());
        write_predictions(o.preds, preds);
    }
    std::cerr << "attribute: " << completed << "/" << dataset.size() << " episodes completed, " << preds.size()
              << " answered\n";
    return completed > 0 || dataset.empty() ? kOk : kBackend;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    std::string dataset, preds, report, csv;
    double iou = 0.7;
};

int cmd_eval(const EvalOpts& o) {
    auto dataset = load_dataset(o.dataset);
    std::vector<PredictionRecord> preds;
    EvalReport report;
    try {
        preds = read_predictions(o.preds);
        report = score(preds, dataset, o.iou);
    } catch (const EvalError& e) {
        throw Failure(kIo, e.what());
    }
    auto j = to_json(report);
    if (!o.report.empty()) write_file(o.report, j.dump(2) + "\n");
    if (!o.csv.empty()) write_file(o.csv, to_csv(report));
    ordered_json summary = {{"schema_version", kSchemaVersion}, {"iou_threshold", o.iou}, {"overall", j.at("overall")}};
    std::cout << summary.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// gen

struct GenOpts {
    std::string mermaid, style = "mixed", out, split = "custom";
    std::uint64_t seed = 0;
    int synthesize = 0;
    int min_nodes = 5, max_nodes = 44;
};

std::optional<StyleFamily> parse_family(const std::string& s) {
    if (s == "mixed") return std::nullopt;
    auto f = style_family_from_string(s);
    if (!f) throw Failure(kUsage, "unknown style '" + s + "'");
    return f;
}

int cmd_gen(const GenOpts& o) {
    static constexpr StyleFamily families[] = {StyleFamily::single_color, StyleFamily::multi_color,
                                               StyleFamily::default_, StyleFamily::black_white};
    auto family = parse_family(o.style);
    auto split = split_from_string(o.split);
    if (!split) throw Failure(kUsage, "unknown split '" + o.split + "'");
    if (o.mermaid.empty() == (o.synthesize == 0)) throw Failure(kUsage, "give exactly one of --mermaid or --synthesize");
    fs::path out(o.out);
    fs::create_directories(out / "images");

    std::vector<QASample> samples;
    if (o.synthesize > 0) {
        SynthesisOptions so;
        so.count = o.synthesize;
        so.seed = o.seed;
        so.min_nodes = o.min_nodes;
        so.max_nodes = o.max_nodes;
        so.family = family;
        if (*split != Split::custom) so.split = split;
        so.svg_dir = out / "images";
        if (so.min_nodes < 3 || so.max_nodes < so.min_nodes) throw Failure(kUsage, "bad node range");
        for (auto& a : synthesize_dataset(so)) samples.push_back(std::move(a.sample));
    } else {
        std::vector<fs::path> files;
        if (fs::is_directory(o.mermaid)) {
            for (const auto& e : fs::directory_iterator(o.mermaid)) {
                if (e.path().extension() == ".mmd") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
        } else {
            files.push_back(o.mermaid);
        }
        if (files.empty()) throw Failure(kIo, "no .mmd files in " + o.mermaid);
        for (std::size_t i = 0; i < files.size(); ++i) {
            std::uint64_t seed = o.seed * 1000003ull + i;
            auto text = read_file(files[i]);
            mermaid::ParseResult parsed;
            try {
                parsed = mermaid::parse(text, mermaid::ParseMode::recover);
            } catch (const mermaid::ParseError& e) {
                throw Failure(kIo, files[i].string() + ": " + e.what());
            }
            print_diagnostics(files[i].string(), parsed.diagnostics);
            std::mt19937_64 rng(seed);
            // A sidecar <name>.qa.json supplies the question; otherwise one is synthesized.
            auto sidecar = fs::path(files[i]).replace_extension(".qa.json");
            Statement statement;
            std::vector<NodeLabel> gt;
            if (fs::exists(sidecar)) {
                auto j = ordered_json::parse(read_file(sidecar), nullptr, false);
                if (j.is_discarded()) throw Failure(kIo, sidecar.string() + " is not valid JSON");
                try {
                    auto type = question_type_from_string(j.value("question_type", "fact_retrieval"));
                    if (!type) throw Failure(kIo, sidecar.string() + ": unknown question_type");
                    statement = Statement(j.at("question").get<std::string>(), j.at("answer").get<std::string>(), *type);
                    for (const auto& l : j.at("gt_nodes")) gt.emplace_back(l.get<std::string>());
                } catch (const std::exception& e) {
                    if (const auto* f = dynamic_cast<const Failure*>(&e)) throw *f;
                    throw Failure(kIo, sidecar.string() + ": " + e.what());
                }
            } else {
                auto st = synthesize_statement(parsed.chart, kQuestionTypes[i % 4], rng);
                statement = st.statement;
                gt = st.gt_nodes;
            }
            AssembleOptions ao;
            ao.split = *split;
            ao.direction = parsed.document.direction;
            ao.svg_dir = out / "images";
            auto f = family.value_or(families[i % 4]);
            try {
                samples.push_back(assemble_sample(parsed.chart, statement, gt, make_style(f, seed), seed, ao).sample);
            } catch (const GraphError& e) {
                throw Failure(kIo, files[i].string() + ": " + e.what());
            }
        }
    }
    // Image paths are stored relative to the dataset file.
    for (auto& s : samples) s.image_path = "images/" + s.id + ".svg";
    write_dataset(out / "dataset.jsonl", samples);
    std::cerr << "gen: wrote " << samples.size() << " samples to " << (out / "dataset.jsonl").string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// stats, trace-stats

int cmd_stats(const std::string& dataset, const std::string& out) {
    emit(out, to_json(dataset_stats(load_dataset(dataset))));
    return kOk;
}

int cmd_trace_stats(const std::string& dir, const std::string& out) {
    if (!fs::is_directory(dir)) throw Failure(kIo, dir + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<AgentTrace> traces;
    for (const auto& f : files) {
        try {
            traces.push_back(trace_from_json(ordered_json::parse(read_file(f))));
        } catch (const std::exception& e) {
            if (const auto* fail = dynamic_cast<const Failure*>(&e)) throw *fail;
            throw Failure(kIo, f.string() + ": " + e.what());
        }
    }
    emit(out, to_json(trace_stats(traces)));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flowchart attribution toolkit"};
    app.require_subcommand(1);
    std::function<int()> run;

    ParseOpts po;
    auto* parse = app.add_subcommand("parse", "Parse a Mermaid flowchart into graph JSON");
    parse->add_option("input", po.input, "Mermaid source file")->required();
    auto* strict = parse->add_flag("--strict", po.strict, "Fail on the first malformed line (default)");
    parse->add_flag("--recover", po.recover, "Repair malformed lines and report each repair")->excludes(strict);
    parse->add_option("--out", po.out, "Output file (default stdout)");
    parse->callback([&] { run = [&] { return cmd_parse(po); }; });

    ToolOpts to;
    auto* tool = app.add_subcommand("tool", "Run one graph tool against a chart");
    tool->add_option("--graph", to.graph, "Mermaid (.mmd) or graph JSON (.json) file")->required();
    tool->add_option("--name", to.name, "Tool name")->required();
    tool->add_option("--args", to.args, "Tool arguments as a JSON object");
    tool->add_option("--out", to.out, "Output file (default stdout)");
    tool->callback([&] { run = [&] { return cmd_tool(to); }; });

    AttributeOpts ao;
    auto* attribute = app.add_subcommand("attribute", "Run attribution episodes over a dataset");
    attribute->add_option("--dataset", ao.dataset, "Dataset JSONL")->required();
    attribute->add_option("--backend", ao.backend, "http, replay, script or oracle")
        ->check(CLI::IsMember({"http", "replay", "script", "oracle"}));
    attribute->add_option("--traces", ao.traces, "Directory for per-sample traces")->required();
    attribute->add_option("--preds", ao.preds, "Predictions JSONL to write");
    attribute->add_option("--max-steps", ao.max_steps, "Tool cycle cap per episode")->check(CLI::Range(1, 1000));
    attribute->add_option("--concurrency", ao.concurrency, "Episodes run in parallel (default: FLOWATTR_CONCURRENCY for http, else 1)")->check(CLI::Range(1, 256));
    attribute->add_option("--config", ao.config, "Backend config JSON");
    attribute->add_option("--endpoint", ao.endpoint, "Chat completions URL (overrides env and config)");
    attribute->add_option("--model", ao.model, "Model name (overrides env and config)");
    attribute->add_option("--cassette", ao.cassette, "Recorded exchanges for --backend replay");
    attribute->add_option("--script", ao.script, "Scripted replies for --backend script");
    attribute->add_option("--record", ao.record, "Append every exchange to this cassette");
    attribute->add_flag("--verbose", ao.verbose, "Log backend requests to stderr");
    attribute->callback([&] { run = [&] { return cmd_attribute(ao); }; });

    EvalOpts eo;
    auto* eval = app.add_subcommand("eval", "Score predictions against a dataset");
    eval->add_option("--dataset", eo.dataset, "Dataset JSONL")->required();
    eval->add_option("--preds", eo.preds, "Predictions JSONL")->required();
    eval->add_option("--iou", eo.iou, "IoU threshold for region matches")->check(CLI::Range(1e-9, 1.0));
    eval->add_option("--report", eo.report, "Full JSON report");
    eval->add_option("--csv", eo.csv, "Per-slice CSV");
    eval->callback([&] { run = [&] { return cmd_eval(eo); }; });

    GenOpts go;
    auto* gen = app.add_subcommand("gen", "Render charts and write a dataset");
    gen->add_option("--mermaid", go.mermaid, "A .mmd file or a directory of them");
    gen->add_option("--synthesize", go.synthesize, "Generate this many random samples instead")->check(CLI::Range(1, 1000000));
    gen->add_option("--style", go.style, "single_color, multi_color, default, black_white or mixed");
    gen->add_option("--split", go.split, "Split recorded on each sample");
    gen->add_option("--seed", go.seed, "Seed");
    gen->add_option("--min-nodes", go.min_nodes, "Smallest synthesized chart");
    gen->add_option("--max-nodes", go.max_nodes, "Largest synthesized chart");
    gen->add_option("--out", go.out, "Output directory")->required();
    gen->callback([&] { run = [&] { return cmd_gen(go); }; });

    std::string stats_in, stats_out;
    auto* stats = app.add_subcommand("stats", "Dataset statistics per split");
    stats->add_option("--dataset", stats_in, "Dataset JSONL")->required();
    stats->add_option("--out", stats_out, "Output file (default stdout)");
    stats->callback([&] { run = [&] { return cmd_stats(stats_in, stats_out); }; });

    std::string traces_in, traces_out;
    auto* tstats = app.add_subcommand("trace-stats", "Tool usage statistics over traces");
    tstats->add_option("--traces", traces_in, "Directory of trace JSON files")->required();
    tstats->add_option("--out", traces_out, "Output file (default stdout)");
    tstats->callback([&] { run = [&] { return cmd_trace_stats(traces_in, traces_out); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        return run();
    } catch (const Failure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    }
}
