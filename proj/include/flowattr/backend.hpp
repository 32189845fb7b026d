#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "flowattr/detail/strings.hpp"
#include "flowattr/toolkit.hpp"

namespace flowattr::llm {

using ordered_json = nlohmann::ordered_json;

enum class Role { system, user, assistant, tool };

inline std::string_view to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "user";
}

inline std::optional<Role> role_from_string(std::string_view s) {
    for (auto r : {Role::system, Role::user, Role::assistant, Role::tool}) {
        if (to_string(r) == s) return r;
    }
    return std::nullopt;
}

struct ImageAttachment {
    std::string media_type;  // e.g. image/svg+xml, image/png
    std::string base64;

    bool operator==(const ImageAttachment&) const = default;
};

struct ChatMessage {
    Role role = Role::user;
    std::string text;
    std::optional<ImageAttachment> image;
    std::optional<tools::ToolCall> tool_call;  // assistant turn that invoked a tool
    std::optional<std::string> tool_call_id;   // tool turn answering that call
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    ordered_json tools = ordered_json::array();
    ordered_json decoding = ordered_json::object();

    std::size_t image_count() const {
        std::size_t n = 0;
        for (const auto& m : messages) n += m.image.has_value();
        return n;
    }
};

/// Either free text, a tool call, or both.
struct ChatReply {
    std::string text;
    std::optional<tools::ToolCall> tool_call;
};

enum class BackendErrorKind { transport, rate_limited, malformed_response, timeout };

inline std::string_view to_string(BackendErrorKind k) {
    switch (k) {
        case BackendErrorKind::transport: return "transport";
        case BackendErrorKind::rate_limited: return "rate_limited";
        case BackendErrorKind::malformed_response: return "malformed_response";
        case BackendErrorKind::timeout: return "timeout";
    }
    return "transport";
}

class BackendError : public std::runtime_error {
public:
    BackendError(BackendErrorKind kind, bool retriable, std::string detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
          kind_(kind),
          retriable_(retriable || kind == BackendErrorKind::rate_limited || kind == BackendErrorKind::timeout),
          detail_(std::move(detail)) {}

    BackendErrorKind kind() const noexcept { return kind_; }
    bool retriable() const noexcept { return retriable_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    BackendErrorKind kind_;
    bool retriable_;
    std::string detail_;
};

/// The only contract the agent relies on. Implementations must be safe to
/// call from several episodes at once.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatReply chat(const ChatRequest& request) = 0;
};

inline void check_request(const ChatRequest& request) {
    if (request.image_count() > 1) {
        throw std::invalid_argument("a chat request may carry at most one image attachment");
    }
}

// ---------------------------------------------------------------------------
// JSON forms (cassettes, digests, logs)

inline ordered_json tool_call_to_json(const tools::ToolCall& c) {
    return {{"id", c.call_id}, {"name", c.tool}, {"arguments", c.arguments}};
}

inline tools::ToolCall tool_call_from_json(const ordered_json& j) {
    return {j.at("name").get<std::string>(), j.value("arguments", ordered_json::object()), j.value("id", "")};
}

inline ordered_json to_json(const ChatReply& r) {
    ordered_json j = {{"text", r.text}};
    j["tool_call"] = r.tool_call ? tool_call_to_json(*r.tool_call) : ordered_json(nullptr);
    return j;
}

inline ChatReply reply_from_json(const ordered_json& j) {
    ChatReply r;
    r.text = j.value("text", "");
    if (j.contains("tool_call") && !j.at("tool_call").is_null()) r.tool_call = tool_call_from_json(j.at("tool_call"));
    return r;
}

/// `image_bytes` replaces image payloads with their size, for logs.
inline ordered_json to_json(const ChatRequest& r, bool image_bytes = false) {
    ordered_json messages = ordered_json::array();
    for (const auto& m : r.messages) {
        ordered_json j = {{"role", to_string(m.role)}, {"text", m.text}};
        if (m.image) {
            j["image"] = {{"media_type", m.image->media_type}};
            if (image_bytes) {
                j["image"]["base64_length"] = m.image->base64.size();
            } else {
                j["image"]["base64"] = m.image->base64;
            }
        }
        if (m.tool_call) j["tool_call"] = tool_call_to_json(*m.tool_call);
        if (m.tool_call_id) j["tool_call_id"] = *m.tool_call_id;
        messages.push_back(std::move(j));
    }
    return {{"messages", std::move(messages)}, {"tools", r.tools}, {"decoding", r.decoding}};
}

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

/// Digest of the canonical request JSON; the key of recorded cassettes.
inline std::string request_digest(const ChatRequest& r) { return sha256_hex(to_json(r).dump()); }

/// Replaces every occurrence of each secret with a fixed marker.
inline std::string redact(std::string text, const std::vector<std::string>& secrets) {
    for (const auto& s : secrets) {
        if (s.empty()) continue;
        for (auto pos = text.find(s); pos != std::string::npos; pos = text.find(s, pos)) {
            text.replace(pos, s.size(), "[REDACTED]");
            pos += 10;
        }
    }
    return text;
}

/// First balanced JSON object embedded in free text, if any.
inline std::optional<ordered_json> first_json_object(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                auto parsed = ordered_json::parse(text.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded()) return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

/// Standard base64 with padding, for image attachments.
inline std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

/// Reads an image file into an attachment; the media type follows the extension.
inline ImageAttachment load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read image " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto ext = path.extension().string();
    std::string type = ext == ".png" ? "image/png" : (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg" : "image/svg+xml";
    return {type, base64_encode(bytes)};
}

// ---------------------------------------------------------------------------
// Scripted backend

using ScriptStep = std::variant<ChatReply, BackendError>;

/// Returns the scripted replies in order and keeps every request it saw.
class ScriptedBackend : public ChatBackend {
public:
    explicit ScriptedBackend(std::vector<ScriptStep> script) : script_(std::move(script)) {}

    static std::shared_ptr<ScriptedBackend> of(std::vector<ChatReply> replies) {
        std::vector<ScriptStep> steps(replies.begin(), replies.end());
        return std::make_shared<ScriptedBackend>(std::move(steps));
    }

    ChatReply chat(const ChatRequest& request) override {
        check_request(request);
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
        if (next_ >= script_.size()) {
            throw BackendError(BackendErrorKind::transport, false,
                               "script exhausted after " + std::to_string(script_.size()) + " replies");
        }
        const auto& step = script_[next_++];
        if (const auto* err = std::get_if<BackendError>(&step)) throw *err;
        return std::get<ChatReply>(step);
    }

    std::vector<ChatRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

    std::size_t remaining() const {
        std::lock_guard lock(mutex_);
        return script_.size() - next_;
    }

private:
    std::vector<ScriptStep> script_;
    std::size_t next_ = 0;
    std::vector<ChatRequest> requests_;
    mutable std::mutex mutex_;
};

/// Convenience builders for scripts.
inline ChatReply say(std::string text) { return ChatReply{std::move(text), std::nullopt}; }

inline ChatReply call(std::string tool, ordered_json arguments, std::string id = {}, std::string text = {}) {
    return ChatReply{std::move(text), tools::ToolCall{std::move(tool), std::move(arguments), std::move(id)}};
}

// ---------------------------------------------------------------------------
// Cassettes: JSON lines of {request_digest, reply}

/// Replays recorded replies keyed by request digest. Identical requests
/// recorded several times are answered in recording order.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(const std::filesystem::path& cassette) {
        std::ifstream in(cassette);
        if (!in) throw std::runtime_error("cannot read cassette " + cassette.string());
        std::string line;
        while (std::getline(in, line)) {
            if (flowattr::detail::trim(line).empty()) continue;
            auto j = ordered_json::parse(line);
            replies_[j.at("request_digest").get<std::string>()].push_back(reply_from_json(j.at("reply")));
        }
    }

    ChatReply chat(const ChatRequest& request) override {
        check_request(request);
        auto digest = request_digest(request);
        std::lock_guard lock(mutex_);
        auto it = replies_.find(digest);
        if (it == replies_.end() || it->second.empty()) {
            throw BackendError(BackendErrorKind::transport, false, "no recorded reply for request " + digest);
        }
        auto reply = std::move(it->second.front());
        it->second.pop_front();
        return reply;
    }

private:
    std::map<std::string, std::deque<ChatReply>> replies_;
    std::mutex mutex_;
};

/// Forwards to another backend and appends each successful exchange to a cassette.
class RecordingBackend : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, const std::filesystem::path& cassette)
        : inner_(std::move(inner)), out_(cassette, std::ios::app) {
        if (!out_) throw std::runtime_error("cannot write cassette " + cassette.string());
    }

    ChatReply chat(const ChatRequest& request) override {
        auto reply = inner_->chat(request);
        ordered_json line = {{"request_digest", request_digest(request)}, {"reply", to_json(reply)}};
        std::lock_guard lock(mutex_);
        out_ << line.dump() << '\n';
        out_.flush();
        return reply;
    }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::ofstream out_;
    std::mutex mutex_;
};

}  // namespace flowattr::llm
