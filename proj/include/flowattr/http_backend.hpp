#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <regex>
#include <semaphore>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "flowattr/backend.hpp"

namespace flowattr::llm {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct HttpConfig {
    std::string endpoint;  // full URL of the chat-completions route
    std::string api_key;
    std::string model;
    double timeout_s = 60;
    int max_attempts = 3;
    int concurrency = 4;
    double backoff_base_s = 1.0;
    ordered_json decoding = {{"temperature", 0}};

    bool configured() const { return !endpoint.empty() && !model.empty(); }
};

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
    if (const char* v = std::getenv(name)) return std::string(v);
    return std::nullopt;
}

namespace http_detail {

inline double to_number(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for " + key + ": '" + text + "'");
    }
}

inline void check(const HttpConfig& c) {
    if (!(c.timeout_s > 0)) throw ConfigError("timeout must be positive");
    if (c.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
    if (c.concurrency < 1 || c.concurrency > 1024) throw ConfigError("concurrency must lie in [1, 1024]");
    if (c.backoff_base_s < 0) throw ConfigError("backoff_base must not be negative");
    if (!c.decoding.is_object()) throw ConfigError("decoding must be an object");
}

}  // namespace http_detail

/// Applies a JSON config document on top of `base`. Unknown keys are rejected.
inline HttpConfig apply_config_json(HttpConfig base, const ordered_json& j) {
    if (!j.is_object()) throw ConfigError("backend config must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "endpoint") base.endpoint = value.get<std::string>();
            else if (key == "api_key") base.api_key = value.get<std::string>();
            else if (key == "model") base.model = value.get<std::string>();
            else if (key == "timeout") base.timeout_s = value.get<double>();
            else if (key == "max_attempts") base.max_attempts = value.get<int>();
            else if (key == "concurrency") base.concurrency = value.get<int>();
            else if (key == "backoff_base") base.backoff_base_s = value.get<double>();
            else if (key == "decoding") base.decoding = value;
            else throw ConfigError("unknown backend config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad backend config value: ") + e.what());
    }
    http_detail::check(base);
    return base;
}

/// Environment overrides: FLOWATTR_ENDPOINT, FLOWATTR_API_KEY, FLOWATTR_MODEL,
/// FLOWATTR_TIMEOUT, FLOWATTR_MAX_ATTEMPTS, FLOWATTR_CONCURRENCY.
inline HttpConfig apply_env(HttpConfig base, const EnvLookup& env = process_env) {
    if (auto v = env("FLOWATTR_ENDPOINT")) base.endpoint = *v;
    if (auto v = env("FLOWATTR_API_KEY")) base.api_key = *v;
    if (auto v = env("FLOWATTR_MODEL")) base.model = *v;
    if (auto v = env("FLOWATTR_TIMEOUT")) base.timeout_s = http_detail::to_number("FLOWATTR_TIMEOUT", *v);
    if (auto v = env("FLOWATTR_MAX_ATTEMPTS")) {
        base.max_attempts = static_cast<int>(http_detail::to_number("FLOWATTR_MAX_ATTEMPTS", *v));
    }
    if (auto v = env("FLOWATTR_CONCURRENCY")) {
        base.concurrency = static_cast<int>(http_detail::to_number("FLOWATTR_CONCURRENCY", *v));
    }
    http_detail::check(base);
    return base;
}

/// File first, then environment.
inline HttpConfig load_http_config(const std::optional<std::filesystem::path>& file,
                                   const EnvLookup& env = process_env) {
    HttpConfig c;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError("cannot read backend config " + file->string());
        try {
            c = apply_config_json(c, ordered_json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("backend config " + file->string() + " is not valid JSON: " + e.what());
        }
    }
    return apply_env(c, env);
}

inline constexpr std::size_t kMaxImageBytes = 8u << 20;

/// Reads a tool call written inline, e.g. {"name": "bfs", "arguments": {...}}.
inline std::optional<tools::ToolCall> inline_tool_call(std::string_view text) {
    auto j = first_json_object(text);
    if (!j) return std::nullopt;
    const ordered_json* name = nullptr;
    for (const char* k : {"name", "tool"}) {
        if (j->contains(k) && j->at(k).is_string()) name = &j->at(k);
    }
    if (!name) return std::nullopt;
    ordered_json args = ordered_json::object();
    for (const char* k : {"arguments", "parameters", "args"}) {
        if (j->contains(k)) {
            args = j->at(k);
            break;
        }
    }
    if (args.is_string()) {
        args = ordered_json::parse(args.get<std::string>(), nullptr, false);
        if (args.is_discarded()) return std::nullopt;
    }
    return tools::ToolCall{name->get<std::string>(), std::move(args), std::string()};
}

/// Parses a chat-completions response body.
inline ChatReply parse_completion(std::string_view body) {
    auto j = ordered_json::parse(body, nullptr, false);
    if (j.is_discarded()) throw BackendError(BackendErrorKind::malformed_response, false, "response is not JSON");
    try {
        const auto& message = j.at("choices").at(0).at("message");
        ChatReply reply;
        if (message.contains("content") && message.at("content").is_string()) {
            reply.text = message.at("content").get<std::string>();
        }
        if (message.contains("tool_calls") && message.at("tool_calls").is_array() &&
            !message.at("tool_calls").empty()) {
            const auto& tc = message.at("tool_calls").at(0);
            const auto& fn = tc.at("function");
            ordered_json args = fn.value("arguments", ordered_json::object());
            if (args.is_string()) {
                auto text = args.get<std::string>();
                args = text.empty() ? ordered_json::object() : ordered_json::parse(text, nullptr, false);
                if (args.is_discarded()) {
                    throw BackendError(BackendErrorKind::malformed_response, false,
                                       "tool call arguments are not valid JSON");
                }
            }
            reply.tool_call = tools::ToolCall{fn.at("name").get<std::string>(), std::move(args), tc.value("id", "")};
        } else if (!reply.text.empty()) {
            reply.tool_call = inline_tool_call(reply.text);
        }
        return reply;
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendErrorKind::malformed_response, false, std::string("unexpected shape: ") + e.what());
    }
}

/// Builds the chat-completions request body.
inline ordered_json completion_body(const ChatRequest& r, const std::string& model, const ordered_json& defaults) {
    ordered_json messages = ordered_json::array();
    for (const auto& m : r.messages) {
        ordered_json j = {{"role", to_string(m.role)}};
        if (m.image) {
            j["content"] = ordered_json::array(
                {{{"type", "text"}, {"text", m.text}},
                 {{"type", "image_url"},
                  {"image_url", {{"url", "data:" + m.image->media_type + ";base64," + m.image->base64}}}}});
        } else {
            j["content"] = m.text;
        }
        if (m.tool_call) {
            j["tool_calls"] = ordered_json::array({{{"id", m.tool_call->call_id},
                                                    {"type", "function"},
                                                    {"function",
                                                     {{"name", m.tool_call->tool},
                                                      {"arguments", m.tool_call->arguments.dump()}}}}});
        }
        if (m.tool_call_id) j["tool_call_id"] = *m.tool_call_id;
        messages.push_back(std::move(j));
    }
    ordered_json body = {{"model", model}, {"messages", std::move(messages)}};
    if (!r.tools.empty()) {
        ordered_json tools = ordered_json::array();
        for (const auto& t : r.tools) tools.push_back({{"type", "function"}, {"function", t}});
        body["tools"] = std::move(tools);
    }
    for (const auto& [k, v] : defaults.items()) body[k] = v;
    for (const auto& [k, v] : r.decoding.items()) body[k] = v;
    return body;
}

/// Chat-completions client with bounded retries and a global request limiter.
class HttpBackend : public ChatBackend {
public:
    using Sleeper = std::function<void(double seconds)>;
    using LogSink = std::function<void(const std::string&)>;

    explicit HttpBackend(HttpConfig config, LogSink log = {}, Sleeper sleep = {})
        : config_(std::move(config)),
          log_(std::move(log)),
          sleep_(sleep ? std::move(sleep) : Sleeper([](double s) {
              std::this_thread::sleep_for(std::chrono::duration<double>(s));
          })),
          limiter_(config_.concurrency),
          jitter_(std::random_device{}()) {
        http_detail::check(config_);
        if (!config_.configured()) throw ConfigError("backend needs an endpoint and a model");
        static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(config_.endpoint, m, url)) {
            throw ConfigError("endpoint must be an http(s) URL: " + config_.endpoint);
        }
        origin_ = m[1];
        path_ = m[2].matched ? std::string(m[2]) : "/v1/chat/completions";
    }

    ChatReply chat(const ChatRequest& request) override {
        check_request(request);
        for (const auto& m : request.messages) {
            if (m.image && m.image->base64.size() / 4 * 3 > kMaxImageBytes) {
                throw BackendError(BackendErrorKind::transport, false, "image attachment exceeds 8 MiB");
            }
        }
        const std::string body = completion_body(request, config_.model, config_.decoding).dump();
        log("request " + to_json(request, true).dump());
        for (int attempt = 1;; ++attempt) {
            try {
                return send(body);
            } catch (const BackendError& e) {
                log("attempt " + std::to_string(attempt) + " failed: " + e.what());
                if (!e.retriable() || attempt >= config_.max_attempts) throw;
                sleep_(backoff(attempt));
            }
        }
    }

    /// Delay before retry `attempt` (1-based): base * 2^(attempt-1), scaled by a jitter factor in [0.5, 1).
    double backoff(int attempt) {
        std::lock_guard lock(jitter_mutex_);
        std::uniform_real_distribution<double> factor(0.5, 1.0);
        return config_.backoff_base_s * std::pow(2.0, attempt - 1) * factor(jitter_);
    }

    const HttpConfig& config() const noexcept { return config_; }

private:
    ChatReply send(const std::string& body) {
        limiter_.acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{limiter_};

        httplib::Client client(origin_);
        auto secs = std::chrono::duration<double>(config_.timeout_s);
        auto us = std::chrono::duration_cast<std::chrono::microseconds>(secs);
        client.set_connection_timeout(us);
        client.set_read_timeout(us);
        client.set_write_timeout(us);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            auto err = res.error();
            bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                             err == httplib::Error::Write;
            throw BackendError(timed_out ? BackendErrorKind::timeout : BackendErrorKind::transport, true,
                               "request failed: " + httplib::to_string(err));
        }
        log("response " + std::to_string(res->status) + " " + res->body);
        if (res->status == 429) throw BackendError(BackendErrorKind::rate_limited, true, "HTTP 429");
        if (res->status == 408 || res->status == 504) {
            throw BackendError(BackendErrorKind::timeout, true, "HTTP " + std::to_string(res->status));
        }
        if (res->status >= 500) {
            throw BackendError(BackendErrorKind::transport, true, "HTTP " + std::to_string(res->status));
        }
        if (res->status != 200) {
            throw BackendError(BackendErrorKind::transport, false,
                               "HTTP " + std::to_string(res->status) + ": " + redact(res->body, {config_.api_key}));
        }
        return parse_completion(res->body);
    }

    void log(const std::string& line) const {
        if (log_) log_(redact(line, {config_.api_key}));
    }

    HttpConfig config_;
    LogSink log_;
    Sleeper sleep_;
    std::counting_semaphore<1024> limiter_;
    std::mt19937_64 jitter_;
    std::mutex jitter_mutex_;
    std::string origin_;
    std::string path_;
};

}  // namespace flowattr::llm
