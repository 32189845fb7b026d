#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<ordered_json> jsonl(const fs::path& p) {
    std::vector<ordered_json> out;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(ordered_json::parse(line));
    }
    return out;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("flowattr-cli-" + std::to_string(std::random_device{}()) + "-" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
        std::ofstream(dir_ / "g1.mmd") << fixtures::kG1Mermaid;
    }
    void TearDown() override { fs::remove_all(dir_); }

    CliRun run(const std::string& args) {
        auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        std::string cmd = "cd '" + dir_.string() + "' && '" FLOWATTR_CLI "' " + args + " > '" + out.string() +
                          "' 2> '" + err.string() + "'";
        int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    }

    void write(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }
    fs::path path(const std::string& name) const { return dir_ / name; }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, ParseStrictAndRecover) {
    auto ok = run("parse g1.mmd");
    ASSERT_EQ(ok.code, 0) << ok.err;
    auto j = ordered_json::parse(ok.out);
    EXPECT_EQ(j.at("schema_version"), 1);
    EXPECT_EQ(j.at("nodes").size(), 5u);
    EXPECT_EQ(j.at("edges").size(), 5u);

    write("bad.mmd", "flowchart TD\n    A[Start] --> B[Next]\n    B -->> \n    B --> C[Done]\n");
    auto strict = run("parse --strict bad.mmd");
    EXPECT_EQ(strict.code, 1);
    EXPECT_NE(strict.err.find("bad.mmd:3:"), std::string::npos) << strict.err;
    auto recover = run("parse --recover bad.mmd");
    EXPECT_EQ(recover.code, 0);
    EXPECT_NE(recover.err.find("warning"), std::string::npos);
    EXPECT_EQ(ordered_json::parse(recover.out).at("nodes").size(), 3u);

    EXPECT_EQ(run("parse missing.mmd").code, 1);
    EXPECT_EQ(run("parse --strict --recover g1.mmd").code, 2);
}

TEST_F(Cli, ToolExitCodes) {
    auto sp = run(R"(tool --graph g1.mmd --name shortest_path --args '{"start_id":"A","end_id":"E"}')");
    ASSERT_EQ(sp.code, 0) << sp.err;
    auto j = ordered_json::parse(sp.out);
    EXPECT_EQ(j.at("payload").dump(), R"(["A","B","C","E"])");
    EXPECT_EQ(j.at("status"), "ok");

    EXPECT_EQ(run("tool --graph g1.mmd --name no_such_tool").code, 2);
    EXPECT_EQ(run(R"(tool --graph g1.mmd --name in_degree --args '{"node_id":3.5}')").code, 2);
    EXPECT_EQ(run("tool --graph g1.mmd --name in_degree --args 'not json'").code, 2);

    auto missing = run(R"(tool --graph g1.mmd --name get_statement --args '{"node_id":"Q"}')");
    EXPECT_EQ(missing.code, 0);
    EXPECT_EQ(ordered_json::parse(missing.out).at("status"), "error");
}

TEST_F(Cli, GenFromMermaidFile) {
    auto r = run("gen --mermaid g1.mmd --style black_white --seed 1 --out out");
    ASSERT_EQ(r.code, 0) << r.err;
    auto samples = jsonl(path("out/dataset.jsonl"));
    ASSERT_EQ(samples.size(), 1u);
    EXPECT_EQ(samples[0].at("style"), "black_white");
    EXPECT_EQ(samples[0].at("schema_version"), 1);
    std::size_t svgs = 0;
    for (const auto& e : fs::directory_iterator(path("out/images"))) svgs += e.path().extension() == ".svg";
    EXPECT_EQ(svgs, 1u);
    EXPECT_TRUE(fs::exists(path("out") / samples[0].at("image_path").get<std::string>()));

    // Same flags, same bytes.
    ASSERT_EQ(run("gen --mermaid g1.mmd --style black_white --seed 1 --out again").code, 0);
    EXPECT_EQ(slurp(path("again/dataset.jsonl")), slurp(path("out/dataset.jsonl")));

    EXPECT_EQ(run("gen --mermaid g1.mmd --style plaid --out x").code, 2);
    EXPECT_EQ(run("gen --out x").code, 2);
}

TEST_F(Cli, AttributeResumeAndPredictions) {
    ASSERT_EQ(run("gen --synthesize 3 --seed 5 --out data").code, 0);
    write("script.json", R"([{"text":"plan","tool_call":null},
        {"text":"","tool_call":{"id":"","name":"bfs","arguments":{}}},
        {"text":"","tool_call":{"id":"","name":"final_answer","arguments":{"answer":{"nodes":["A","B"]}}}}])");
    auto first = run("attribute --dataset data/dataset.jsonl --backend script --script script.json --traces traces "
                     "--preds preds.jsonl --concurrency 2");
    ASSERT_EQ(first.code, 0) << first.err;
    EXPECT_NE(first.err.find("3 to run"), std::string::npos) << first.err;
    std::size_t traces = 0;
    for (const auto& e : fs::directory_iterator(path("traces"))) {
        ++traces;
        auto t = ordered_json::parse(slurp(e.path()));
        EXPECT_EQ(t.at("schema_version"), 1);
        EXPECT_EQ(t.at("outcome"), "answered");
    }
    EXPECT_EQ(traces, 3u);
    auto preds = jsonl(path("preds.jsonl"));
    ASSERT_EQ(preds.size(), 3u);
    EXPECT_EQ(preds[0].at("pred_nodes").dump(), R"(["A","B"])");

    auto again = run("attribute --dataset data/dataset.jsonl --backend script --script script.json --traces traces "
                     "--preds preds2.jsonl");
    EXPECT_EQ(again.code, 0);
    EXPECT_NE(again.err.find("0 to run"), std::string::npos) << again.err;
    EXPECT_EQ(slurp(path("preds2.jsonl")), slurp(path("preds.jsonl")));

    auto ts = run("trace-stats --traces traces");
    ASSERT_EQ(ts.code, 0);
    auto st = ordered_json::parse(ts.out);
    EXPECT_EQ(st.at("step_tool_matrix").dump(), R"({"1":{"bfs":3},"2":{"final_answer":3}})");
}

TEST_F(Cli, AttributeBackendFailures) {
    ASSERT_EQ(run("gen --synthesize 2 --seed 5 --out data").code, 0);
    std::string env = "env -u FLOWATTR_ENDPOINT -u FLOWATTR_MODEL -u FLOWATTR_API_KEY ";
    auto cmd = "attribute --dataset data/dataset.jsonl --backend http --traces t1";
    auto out = dir_ / "o.txt";
    int status = std::system(("cd '" + dir_.string() + "' && " + env + "'" FLOWATTR_CLI "' " + cmd + " 2> '" +
                              out.string() + "'")
                                 .c_str());
    EXPECT_EQ(WEXITSTATUS(status), 3);

    // Every episode fails: an empty script is exhausted on the first request.
    write("empty.json", "[]");
    auto r = run("attribute --dataset data/dataset.jsonl --backend script --script empty.json --traces t2 "
                 "--preds p.jsonl");
    EXPECT_EQ(r.code, 3);
    EXPECT_TRUE(jsonl(path("p.jsonl")).empty());

    // Failed episodes are retried on the next run.
    auto retry = run("attribute --dataset data/dataset.jsonl --backend oracle --traces t2 --preds p.jsonl");
    EXPECT_EQ(retry.code, 0);
    EXPECT_NE(retry.err.find("2 to run"), std::string::npos);
    EXPECT_EQ(jsonl(path("p.jsonl")).size(), 2u);

    EXPECT_EQ(run("attribute --dataset data/dataset.jsonl --backend replay --traces t3").code, 2);
    EXPECT_EQ(run("attribute --dataset data/dataset.jsonl --backend oracle --traces t3 --max-steps 0").code, 2);
}

TEST_F(Cli, EvalReports) {
    write("g1.qa.json", R"({"question":"What does the chart print for x = 5?","answer":"Print positive",
        "question_type":"applied_scenario","gt_nodes":["A","B","C"]})");
    ASSERT_EQ(run("gen --mermaid g1.mmd --style default --out data").code, 0);
    auto id = jsonl(path("data/dataset.jsonl"))[0].at("id").get<std::string>();
    write("preds.jsonl", ordered_json{{"sample_id", id}, {"pred_nodes", {"B", "C", "D"}}}.dump() + "\n");
    auto r = run("eval --dataset data/dataset.jsonl --preds preds.jsonl --report report.json --csv report.csv");
    ASSERT_EQ(r.code, 0) << r.err;
    auto report = ordered_json::parse(slurp(path("report.json")));
    EXPECT_EQ(report.at("schema_version"), 1);
    for (auto key : {"precision", "recall", "f1"}) EXPECT_DOUBLE_EQ(report.at("overall").at(key).get<double>(), 66.67);
    EXPECT_NE(slurp(path("report.csv")).find("overall,66.67,66.67,66.67,2,1,1"), std::string::npos);

    write("perfect.jsonl", ordered_json{{"sample_id", id}, {"pred_nodes", {"A", "B", "C"}}}.dump() + "\n");
    auto perfect = run("eval --dataset data/dataset.jsonl --preds perfect.jsonl");
    EXPECT_DOUBLE_EQ(ordered_json::parse(perfect.out).at("overall").at("f1").get<double>(), 100.0);

    EXPECT_EQ(run("eval --dataset data/dataset.jsonl --preds nowhere.jsonl").code, 1);
    EXPECT_EQ(run("eval --dataset data/dataset.jsonl --preds perfect.jsonl --iou 1.5").code, 2);
}

TEST_F(Cli, StatsFields) {
    ASSERT_EQ(run("gen --synthesize 8 --seed 2 --out data").code, 0);
    auto r = run("stats --dataset data/dataset.jsonl");
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = ordered_json::parse(r.out);
    EXPECT_EQ(j.at("overall").at("num_questions"), 8);
    for (auto key : {"num_flowcharts", "num_questions", "question_types", "avg_nodes", "max_nodes",
                     "avg_attributed_path_length", "max_attributed_path_length", "avg_words_question",
                     "avg_words_answer"}) {
        EXPECT_TRUE(j.at("overall").contains(key)) << key;
    }
    EXPECT_EQ(j.at("overall").at("max_nodes"), 44);
    EXPECT_EQ(run("stats --dataset nothing.jsonl").code, 1);
}
