#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toolforge/util.hpp"

namespace toolforge {

enum class Role { System, User, Assistant, Tool };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name); // throws ParseFailure

struct ToolCall {
    std::string id;
    std::string name;
    json arguments = json::object();

    bool operator==(const ToolCall&) const = default;
};

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    std::vector<ToolCall> tool_calls; // assistant only
    std::string tool_call_id;         // tool only
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    json tools = nullptr; // OpenAI tools array, or null
    double temperature = 0.7;
    int max_turn_tokens = 2048;
    std::optional<std::uint64_t> seed;
};

struct ChatReply {
    std::string content;
    std::vector<ToolCall> tool_calls; // populated only by native tool calling
    json usage = nullptr;
};

using Embedding = std::vector<double>;

// Hash of the role-tagged, whitespace-normalized message list plus model id.
// Mock transcripts are keyed by this value.
std::string prompt_fingerprint(const ChatRequest& req);

// Wire-format helpers shared by the HTTP backend and its tests.
json chat_request_body(const ChatRequest& req);
ChatReply parse_chat_response(const json& body);
json embedding_request_body(std::span<const std::string> texts, const std::string& model);
std::vector<Embedding> parse_embedding_response(const json& body, std::size_t expected);

// A backend performs exactly one attempt. It signals retryable failures with
// TransportError / RateLimited and caller bugs with BadRequest.
class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatReply chat(const ChatRequest& req) = 0;
    virtual std::vector<Embedding> embed(std::span<const std::string> texts, const std::string& model) = 0;
};

struct GatewayConfig {
    std::string label = "default"; // role name in audit logs (user, judge, ...)
    std::string backend = "offline"; // http | mock | offline
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model = "gpt-4o-mini";
    std::string embedding_model = "text-embedding-3-small";
    double temperature = 0.7;
    int max_turn_tokens = 2048;
    double request_timeout_s = 120.0;
    int max_retries = 3;
    double backoff_base_s = 1.0;
    int concurrency_limit = 8;
    bool native_tools = false;
    std::string transcript;     // mock backend: JSON object fingerprint -> reply
    int embedding_dim = 64;     // mock/offline embeddings
    std::uint64_t seed = 0;     // mock/offline embeddings

    void validate() const; // throws ConfigError
};

GatewayConfig gateway_config_from_json(const json& j, GatewayConfig base = {});
json to_json(const GatewayConfig& cfg);

struct AuditEntry {
    std::string gateway;
    std::string kind; // chat | embed
    std::string model;
    std::string fingerprint;
    int attempt = 0;
    std::string status; // ok | transport | rate_limited | bad_request | error
    double latency_ms = 0.0;
    json request;
    json response;
};

// Thread-safe request log. Optionally mirrors every entry to a JSONL file.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(const std::filesystem::path& file);

    void record(AuditEntry entry);
    std::vector<AuditEntry> entries() const;
    std::size_t count(std::string_view gateway, std::string_view kind) const;

private:
    mutable std::mutex mu_;
    std::vector<AuditEntry> entries_;
    std::ofstream file_;
};

struct GatewayStats {
    std::size_t chat_calls = 0;   // logical calls
    std::size_t embed_calls = 0;
    std::size_t attempts = 0;     // includes retries
    std::size_t retries = 0;
    std::size_t max_in_flight = 0;
};

// Retries, backoff, the in-flight limit and auditing wrap any Backend.
class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::duration<double>)>;

    Gateway(GatewayConfig cfg, std::shared_ptr<Backend> backend,
            std::shared_ptr<AuditLog> audit = nullptr);

    ChatReply chat(ChatRequest req);
    std::vector<Embedding> embed(std::span<const std::string> texts);

    const GatewayConfig& config() const { return cfg_; }
    GatewayStats stats() const;
    void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

private:
    template <class Fn>
    auto with_retries(const char* kind, const std::string& fingerprint, const json& request, Fn&& fn);

    GatewayConfig cfg_;
    std::shared_ptr<Backend> backend_;
    std::shared_ptr<AuditLog> audit_;
    std::counting_semaphore<1 << 16> slots_;
    Sleeper sleeper_;
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> max_in_flight_{0};
    std::atomic<std::size_t> chat_calls_{0};
    std::atomic<std::size_t> embed_calls_{0};
    std::atomic<std::size_t> attempts_{0};
    std::atomic<std::size_t> retries_{0};
};

// ---- backends ----------------------------------------------------------------

// OpenAI-compatible /chat/completions and /embeddings over HTTP(S). The API
// key is read from the environment variable named in the config, never from
// a file.
std::shared_ptr<Backend> make_http_backend(const GatewayConfig& cfg);

// Deterministic unit-norm pseudo-random embedding of `text`.
Embedding hash_embedding(std::string_view text, std::uint64_t seed, int dim);

// Answers chat from a fingerprint-keyed transcript; an absent fingerprint is
// an UnscriptedPrompt error. Embeddings are hash_embedding vectors.
class MockBackend : public Backend {
public:
    MockBackend(std::map<std::string, std::string> transcript, std::uint64_t seed, int dim = 64);

    static std::map<std::string, std::string> load_transcript(const std::filesystem::path& path);

    ChatReply chat(const ChatRequest& req) override;
    std::vector<Embedding> embed(std::span<const std::string> texts, const std::string& model) override;

private:
    std::map<std::string, std::string> transcript_;
    std::uint64_t seed_;
    int dim_;
};

// Rule-based stand-in for every prompt the pipeline sends. Replies are well
// formed and derived from a hash of the request, so whole runs are offline
// and reproducible.
std::shared_ptr<Backend> make_offline_backend(std::uint64_t seed, int dim);

// Builds the backend named by cfg.backend.
std::shared_ptr<Backend> make_backend(const GatewayConfig& cfg);

} // namespace toolforge
