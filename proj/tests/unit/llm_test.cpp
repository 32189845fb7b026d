#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "flowattr/http_backend.hpp"

using namespace flowattr;
using namespace flowattr::llm;

namespace {

constexpr const char* kSecret = "sk-test-0123456789abcdef";

/// Local chat-completions stand-in; `handler` decides every response.
class MockServer {
public:
    explicit MockServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

HttpConfig config_for(const MockServer& s) {
    HttpConfig c;
    c.endpoint = s.endpoint();
    c.api_key = kSecret;
    c.model = "test-model";
    c.timeout_s = 5;
    return c;
}

std::string completion_with_tool_call(const std::string& name, const std::string& args) {
    ordered_json j = {{"choices",
                       {{{"message",
                          {{"role", "assistant"},
                           {"content", nullptr},
                           {"tool_calls",
                            {{{"id", "call_7"},
                              {"type", "function"},
                              {"function", {{"name", name}, {"arguments", args}}}}}}}}}}}};
    return j.dump();
}

ChatRequest simple_request() {
    ChatRequest r;
    r.messages.push_back({Role::system, "system text", std::nullopt, std::nullopt, std::nullopt});
    r.messages.push_back({Role::user, "user text", std::nullopt, std::nullopt, std::nullopt});
    r.tools = tools::tool_schemas();
    return r;
}

}  // namespace

TEST(Llm, ScriptedBackendRepliesInOrderThenExhausts) {
    auto b = ScriptedBackend::of({say("hello"), call("bfs", {{"start_id", "A"}}, "c1")});
    auto r1 = b->chat(simple_request());
    EXPECT_EQ(r1.text, "hello");
    EXPECT_FALSE(r1.tool_call);
    auto r2 = b->chat(simple_request());
    ASSERT_TRUE(r2.tool_call);
    EXPECT_EQ(r2.tool_call->tool, "bfs");
    EXPECT_EQ(b->remaining(), 0u);
    try {
        b->chat(simple_request());
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendErrorKind::transport);
        EXPECT_FALSE(e.retriable());
        EXPECT_NE(e.detail().find("script exhausted"), std::string::npos);
    }
    EXPECT_EQ(b->requests().size(), 3u);

    ScriptedBackend failing({BackendError(BackendErrorKind::rate_limited, false, "busy")});
    try {
        failing.chat(simple_request());
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_TRUE(e.retriable());  // rate limits are always retriable
    }
}

TEST(Llm, RequestsCarryAtMostOneImage) {
    auto r = simple_request();
    r.messages[1].image = ImageAttachment{"image/png", "AAAA"};
    EXPECT_NO_THROW(check_request(r));
    r.messages.push_back({Role::user, "again", ImageAttachment{"image/png", "AAAA"}, std::nullopt, std::nullopt});
    EXPECT_THROW(ScriptedBackend::of({say("x")})->chat(r), std::invalid_argument);
}

TEST(Llm, DigestAndRedaction) {
    auto a = simple_request();
    auto b = simple_request();
    EXPECT_EQ(request_digest(a), request_digest(b));
    EXPECT_EQ(request_digest(a).size(), 64u);
    b.messages[1].text = "other";
    EXPECT_NE(request_digest(a), request_digest(b));
    // Known SHA-256 vector.
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(redact("key=abc; again abc", {"abc", ""}), "key=[REDACTED]; again [REDACTED]");
}

TEST(Llm, RecordThenReplay) {
    auto path = std::filesystem::temp_directory_path() / "flowattr_cassette_test.jsonl";
    std::filesystem::remove(path);
    auto inner = ScriptedBackend::of({call("get_statement", {{"node_id", "B"}}, "c1"), say("done")});
    auto first = simple_request();
    auto second = simple_request();
    second.messages.push_back({Role::user, "next", std::nullopt, std::nullopt, std::nullopt});
    {
        RecordingBackend rec(inner, path);
        rec.chat(first);
        rec.chat(second);
    }
    ReplayBackend replay(path);
    auto r1 = replay.chat(first);
    ASSERT_TRUE(r1.tool_call);
    EXPECT_EQ(r1.tool_call->arguments.at("node_id"), "B");
    EXPECT_EQ(replay.chat(second).text, "done");
    EXPECT_THROW(replay.chat(first), BackendError);  // each recording answers once
    std::filesystem::remove(path);
}

TEST(Llm, ParseCompletionShapes) {
    auto r = parse_completion(completion_with_tool_call("shortest_path", R"({"start_id":"A","end_id":"E"})"));
    ASSERT_TRUE(r.tool_call);
    EXPECT_EQ(r.tool_call->tool, "shortest_path");
    EXPECT_EQ(r.tool_call->call_id, "call_7");
    EXPECT_EQ(r.tool_call->arguments.at("end_id"), "E");

    auto inline_call = parse_completion(
        R"({"choices":[{"message":{"content":"I will call {\"name\": \"in_degree\", \"arguments\": {\"node_id\": \"E\"}} now"}}]})");
    ASSERT_TRUE(inline_call.tool_call);
    EXPECT_EQ(inline_call.tool_call->tool, "in_degree");
    EXPECT_EQ(inline_call.tool_call->arguments.at("node_id"), "E");

    auto text = parse_completion(R"({"choices":[{"message":{"content":"just words {not json}"}}]})");
    EXPECT_FALSE(text.tool_call);
    EXPECT_EQ(text.text, "just words {not json}");

    auto expect_malformed = [](std::string_view body) {
        try {
            parse_completion(body);
            ADD_FAILURE() << body;
        } catch (const BackendError& e) {
            EXPECT_EQ(e.kind(), BackendErrorKind::malformed_response);
        }
    };
    expect_malformed("not json");
    expect_malformed(R"({"choices":[]})");
    expect_malformed(completion_with_tool_call("bfs", "{broken"));
}

TEST(Llm, HttpToolCallEcho) {
    std::string seen_auth;
    ordered_json seen_body;
    MockServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = ordered_json::parse(req.body);
        res.set_content(completion_with_tool_call("get_statement", R"({"node_id":"B"})"), "application/json");
    });
    std::vector<std::string> logs;
    HttpBackend backend(config_for(server), [&](const std::string& l) { logs.push_back(l); });
    auto req = simple_request();
    req.messages[1].image = ImageAttachment{"image/svg+xml", "PHN2Zy8+"};
    auto reply = backend.chat(req);
    ASSERT_TRUE(reply.tool_call);
    EXPECT_EQ(reply.tool_call->tool, "get_statement");
    EXPECT_EQ(reply.tool_call->arguments, (ordered_json{{"node_id", "B"}}));
    EXPECT_EQ(seen_auth, std::string("Bearer ") + kSecret);
    EXPECT_EQ(seen_body.at("model"), "test-model");
    EXPECT_EQ(seen_body.at("temperature"), 0);
    EXPECT_EQ(seen_body.at("tools").size(), 13u);
    EXPECT_EQ(seen_body.at("messages").at(1).at("content").at(1).at("image_url").at("url"),
              "data:image/svg+xml;base64,PHN2Zy8+");
    ASSERT_FALSE(logs.empty());
    for (const auto& l : logs) EXPECT_EQ(l.find(kSecret), std::string::npos) << l;
}

TEST(Llm, HttpRetriesRateLimitThenSucceeds) {
    std::atomic<int> hits{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        if (++hits <= 2) {
            res.status = 429;
            res.set_content(std::string("slow down, ") + kSecret, "text/plain");
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"ok"}}]})", "application/json");
    });
    std::vector<double> sleeps;
    std::vector<std::string> logs;
    HttpBackend backend(config_for(server), [&](const std::string& l) { logs.push_back(l); },
                        [&](double s) { sleeps.push_back(s); });
    EXPECT_EQ(backend.chat(simple_request()).text, "ok");
    EXPECT_EQ(hits.load(), 3);
    ASSERT_EQ(sleeps.size(), 2u);
    EXPECT_GE(sleeps[0], 0.5);
    EXPECT_LT(sleeps[0], 1.0);
    EXPECT_GE(sleeps[1], 1.0);
    EXPECT_LT(sleeps[1], 2.0);
    for (const auto& l : logs) EXPECT_EQ(l.find(kSecret), std::string::npos) << l;
}

TEST(Llm, HttpErrorsAreClassified) {
    std::atomic<int> hits{0};
    std::string mode;
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        if (mode == "garbage") {
            res.set_content("<html>oops", "text/html");
        } else if (mode == "500") {
            res.status = 500;
        } else if (mode == "401") {
            res.status = 401;
            res.set_content("bad key", "text/plain");
        } else if (mode == "slow") {
            std::this_thread::sleep_for(std::chrono::milliseconds(800));
            res.set_content(R"({"choices":[{"message":{"content":"late"}}]})", "application/json");
        }
    });
    auto cfg = config_for(server);
    std::vector<double> sleeps;
    HttpBackend backend(cfg, {}, [&](double s) { sleeps.push_back(s); });
    auto expect = [&](const std::string& m, BackendErrorKind kind, int requests) {
        mode = m;
        hits = 0;
        try {
            backend.chat(simple_request());
            ADD_FAILURE() << m;
        } catch (const BackendError& e) {
            EXPECT_EQ(e.kind(), kind) << m << ": " << e.what();
        }
        EXPECT_EQ(hits.load(), requests) << m;
    };
    expect("garbage", BackendErrorKind::malformed_response, 1);
    expect("500", BackendErrorKind::transport, 3);
    expect("401", BackendErrorKind::transport, 1);

    cfg.timeout_s = 0.2;
    cfg.max_attempts = 2;
    HttpBackend impatient(cfg, {}, [](double) {});
    mode = "slow";
    try {
        impatient.chat(simple_request());
        ADD_FAILURE();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendErrorKind::timeout);
        EXPECT_TRUE(e.retriable());
    }
}

TEST(Llm, HttpConcurrencyLimiter) {
    std::atomic<int> active{0}, peak{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        int now = ++active;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(60));
        --active;
        res.set_content(R"({"choices":[{"message":{"content":"ok"}}]})", "application/json");
    });
    auto cfg = config_for(server);
    cfg.concurrency = 2;
    HttpBackend backend(cfg);
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) threads.emplace_back([&] { backend.chat(simple_request()); });
    for (auto& t : threads) t.join();
    EXPECT_LE(peak.load(), 2);
    EXPECT_GE(peak.load(), 1);
}

TEST(Llm, ConfigLayers) {
    auto path = std::filesystem::temp_directory_path() / "flowattr_backend_config.json";
    {
        std::ofstream f(path);
        f << R"({"endpoint": "http://file.example/v1/chat/completions", "model": "file-model", "timeout": 30,
                 "decoding": {"temperature": 0.2}})";
    }
    std::map<std::string, std::string> env = {{"FLOWATTR_MODEL", "env-model"}, {"FLOWATTR_CONCURRENCY", "2"}};
    auto lookup = [&](const char* k) -> std::optional<std::string> {
        auto it = env.find(k);
        return it == env.end() ? std::nullopt : std::optional<std::string>(it->second);
    };
    auto c = load_http_config(path, lookup);
    EXPECT_EQ(c.endpoint, "http://file.example/v1/chat/completions");
    EXPECT_EQ(c.model, "env-model");
    EXPECT_EQ(c.timeout_s, 30);
    EXPECT_EQ(c.concurrency, 2);
    EXPECT_EQ(c.max_attempts, 3);
    EXPECT_EQ(c.decoding.at("temperature"), 0.2);

    {
        std::ofstream f(path);
        f << R"({"endpoint": "http://x", "modle": "typo"})";
    }
    EXPECT_THROW(load_http_config(path, lookup), ConfigError);
    env["FLOWATTR_TIMEOUT"] = "soon";
    EXPECT_THROW(load_http_config(std::nullopt, lookup), ConfigError);
    env.erase("FLOWATTR_TIMEOUT");
    EXPECT_FALSE(load_http_config(std::nullopt, lookup).configured());
    EXPECT_THROW(HttpBackend(HttpConfig{}), ConfigError);
    std::filesystem::remove(path);
}
