#include "toolforge/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "toolforge/error.hpp"

namespace toolforge {

std::string_view role_name(Role role) {
    switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
    }
    return "user";
}

Role role_from_name(std::string_view name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    if (name == "tool") return Role::Tool;
    throw ParseFailure("unknown role '" + std::string(name) + "'");
}

std::string prompt_fingerprint(const ChatRequest& req) {
    json canon = json::array();
    for (const auto& m : req.messages) {
        json entry = {role_name(m.role), normalize_whitespace(m.content)};
        for (const auto& call : m.tool_calls) {
            entry.push_back(json{call.name, call.arguments});
        }
        canon.push_back(std::move(entry));
    }
    json key = {{"model", req.model}, {"messages", std::move(canon)}};
    return sha256_hex(key.dump()).substr(0, 16);
}

json chat_request_body(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        json msg = {{"role", role_name(m.role)}, {"content", m.content}};
        if (m.role == Role::Assistant && !m.tool_calls.empty()) {
            json calls = json::array();
            for (const auto& c : m.tool_calls) {
                calls.push_back({{"id", c.id},
                                 {"type", "function"},
                                 {"function", {{"name", c.name}, {"arguments", c.arguments.dump()}}}});
            }
            msg["tool_calls"] = std::move(calls);
        }
        if (m.role == Role::Tool && !m.tool_call_id.empty()) msg["tool_call_id"] = m.tool_call_id;
        messages.push_back(std::move(msg));
    }
    json body = {{"model", req.model},
                 {"messages", std::move(messages)},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_turn_tokens}};
    if (req.tools.is_array() && !req.tools.empty()) body["tools"] = req.tools;
    if (req.seed) body["seed"] = *req.seed;
    return body;
}

ChatReply parse_chat_response(const json& body) {
    if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() ||
        body["choices"].empty()) {
        throw TransportError("chat response has no choices");
    }
    const auto& message = body["choices"][0].value("message", json::object());
    ChatReply reply;
    if (message.contains("content") && message["content"].is_string()) {
        reply.content = message["content"].get<std::string>();
    }
    if (message.contains("tool_calls") && message["tool_calls"].is_array()) {
        for (const auto& c : message["tool_calls"]) {
            ToolCall call;
            call.id = c.value("id", "");
            const auto& fn = c.value("function", json::object());
            call.name = fn.value("name", "");
            if (fn.contains("arguments")) {
                const auto& args = fn["arguments"];
                if (args.is_string()) {
                    auto parsed = json::parse(args.get<std::string>(), nullptr, false);
                    call.arguments = parsed.is_discarded() ? args : parsed;
                } else {
                    call.arguments = args;
                }
            }
            reply.tool_calls.push_back(std::move(call));
        }
    }
    if (body.contains("usage")) reply.usage = body["usage"];
    return reply;
}

json embedding_request_body(std::span<const std::string> texts, const std::string& model) {
    return {{"model", model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
}

std::vector<Embedding> parse_embedding_response(const json& body, std::size_t expected) {
    if (!body.is_object() || !body.contains("data") || !body["data"].is_array()) {
        throw TransportError("embedding response has no data");
    }
    const auto& data = body["data"];
    if (data.size() != expected) {
        throw DimensionMismatch("expected " + std::to_string(expected) + " embeddings, got " +
                                std::to_string(data.size()));
    }
    std::vector<Embedding> out(expected);
    std::vector<bool> seen(expected, false);
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto& item = data[k];
        std::size_t idx = item.value("index", k);
        if (idx >= expected || seen[idx]) throw DimensionMismatch("bad embedding index");
        seen[idx] = true;
        out[idx] = item.at("embedding").get<Embedding>();
    }
    const std::size_t dim = out.front().size();
    for (const auto& v : out) {
        if (v.size() != dim || dim == 0) throw DimensionMismatch("ragged embedding batch");
    }
    return out;
}

// ---- config -------------------------------------------------------------------

void GatewayConfig::validate() const {
    if (concurrency_limit < 1) throw ConfigError("gateway '" + label + "': concurrency_limit must be >= 1");
    if (max_retries < 0) throw ConfigError("gateway '" + label + "': max_retries must be >= 0");
    if (backoff_base_s < 0) throw ConfigError("gateway '" + label + "': backoff_base_s must be >= 0");
    if (temperature < 0) throw ConfigError("gateway '" + label + "': temperature must be >= 0");
    if (max_turn_tokens <= 0) throw ConfigError("gateway '" + label + "': max_turn_tokens must be > 0");
    if (embedding_dim <= 0) throw ConfigError("gateway '" + label + "': embedding_dim must be > 0");
    if (backend != "http" && backend != "mock" && backend != "offline") {
        throw ConfigError("gateway '" + label + "': unknown backend '" + backend + "'");
    }
}

GatewayConfig gateway_config_from_json(const json& j, GatewayConfig c) {
    if (!j.is_object()) throw ConfigError("gateway config must be an object");
    if (j.contains("api_key")) throw ConfigError("api keys are read from the environment; use api_key_env");
    try {
        c.backend = j.value("backend", c.backend);
        c.base_url = j.value("base_url", c.base_url);
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.model = j.value("model", c.model);
        c.embedding_model = j.value("embedding_model", c.embedding_model);
        c.temperature = j.value("temperature", c.temperature);
        c.max_turn_tokens = j.value("max_turn_tokens", c.max_turn_tokens);
        c.request_timeout_s = j.value("request_timeout_s", c.request_timeout_s);
        c.max_retries = j.value("max_retries", c.max_retries);
        c.backoff_base_s = j.value("backoff_base_s", c.backoff_base_s);
        c.concurrency_limit = j.value("concurrency_limit", c.concurrency_limit);
        c.native_tools = j.value("native_tools", c.native_tools);
        c.transcript = j.value("transcript", c.transcript);
        c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("gateway config: ") + e.what());
    }
    return c;
}

json to_json(const GatewayConfig& c) {
    return {{"backend", c.backend},
            {"base_url", c.base_url},
            {"api_key_env", c.api_key_env},
            {"model", c.model},
            {"embedding_model", c.embedding_model},
            {"temperature", c.temperature},
            {"max_turn_tokens", c.max_turn_tokens},
            {"request_timeout_s", c.request_timeout_s},
            {"max_retries", c.max_retries},
            {"backoff_base_s", c.backoff_base_s},
            {"concurrency_limit", c.concurrency_limit},
            {"native_tools", c.native_tools},
            {"transcript", c.transcript},
            {"embedding_dim", c.embedding_dim},
            {"seed", c.seed}};
}

// ---- audit --------------------------------------------------------------------

AuditLog::AuditLog(const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    file_.open(file, std::ios::app);
    if (!file_) throw Error("cannot open audit log " + file.string());
}

void AuditLog::record(AuditEntry entry) {
    std::lock_guard lock(mu_);
    if (file_.is_open()) {
        auto now = std::chrono::system_clock::now().time_since_epoch();
        json line = {{"ts_ms", std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
                     {"gateway", entry.gateway},
                     {"kind", entry.kind},
                     {"model", entry.model},
                     {"fingerprint", entry.fingerprint},
                     {"attempt", entry.attempt},
                     {"status", entry.status},
                     {"latency_ms", entry.latency_ms},
                     {"request", entry.request},
                     {"response", entry.response}};
        file_ << line.dump() << '\n';
        file_.flush();
    }
    entries_.push_back(std::move(entry));
}

std::vector<AuditEntry> AuditLog::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::size_t AuditLog::count(std::string_view gateway, std::string_view kind) const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [&](const AuditEntry& e) {
        return e.gateway == gateway && e.kind == kind;
    }));
}

// ---- gateway ------------------------------------------------------------------

Gateway::Gateway(GatewayConfig cfg, std::shared_ptr<Backend> backend, std::shared_ptr<AuditLog> audit)
    : cfg_(std::move(cfg)),
      backend_(std::move(backend)),
      audit_(std::move(audit)),
      slots_(std::max(1, cfg_.concurrency_limit)),
      sleeper_([](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); }) {
    cfg_.validate();
    if (!backend_) throw ConfigError("gateway '" + cfg_.label + "' has no backend");
}

template <class Fn>
auto Gateway::with_retries(const char* kind, const std::string& fingerprint, const json& request, Fn&& fn) {
    for (int attempt = 0;; ++attempt) {
        attempts_.fetch_add(1);
        if (attempt > 0) retries_.fetch_add(1);
        AuditEntry entry{cfg_.label, kind, cfg_.model, fingerprint, attempt, "ok", 0.0, request, nullptr};
        auto start = std::chrono::steady_clock::now();
        auto finish = [&](std::string status, json response) {
            entry.status = std::move(status);
            entry.response = std::move(response);
            entry.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            if (audit_) audit_->record(std::move(entry));
        };

        bool retryable = false;
        std::exception_ptr failure;
        slots_.acquire();
        std::size_t now = in_flight_.fetch_add(1) + 1;
        std::size_t seen = max_in_flight_.load();
        while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {}
        try {
            auto result = fn();
            in_flight_.fetch_sub(1);
            slots_.release();
            finish("ok", result.second);
            return std::move(result.first);
        } catch (const TransportError& e) {
            finish("transport", e.what());
            retryable = true;
            failure = std::current_exception();
        } catch (const RateLimited& e) {
            finish("rate_limited", e.what());
            retryable = true;
            failure = std::current_exception();
        } catch (const BadRequest& e) {
            finish("bad_request", e.what());
            failure = std::current_exception();
        } catch (const std::exception& e) {
            finish("error", e.what());
            failure = std::current_exception();
        }
        in_flight_.fetch_sub(1);
        slots_.release();
        if (!retryable || attempt >= cfg_.max_retries) std::rethrow_exception(failure);
        if (cfg_.backoff_base_s > 0) {
            sleeper_(std::chrono::duration<double>(cfg_.backoff_base_s * std::pow(2.0, attempt)));
        }
    }
}

ChatReply Gateway::chat(ChatRequest req) {
    if (req.messages.empty()) throw BadRequest("chat request without messages");
    if (req.model.empty()) req.model = cfg_.model;
    chat_calls_.fetch_add(1);
    const std::string fp = prompt_fingerprint(req);
    json request = {{"messages", chat_request_body(req)["messages"]}};
    return with_retries("chat", fp, request, [&] {
        ChatReply reply = backend_->chat(req);
        json logged = {{"content", reply.content}};
        if (!reply.tool_calls.empty()) {
            json calls = json::array();
            for (const auto& c : reply.tool_calls) calls.push_back({{"name", c.name}, {"arguments", c.arguments}});
            logged["tool_calls"] = std::move(calls);
        }
        return std::make_pair(std::move(reply), std::move(logged));
    });
}

std::vector<Embedding> Gateway::embed(std::span<const std::string> texts) {
    if (texts.empty()) throw BadRequest("embed request without texts");
    embed_calls_.fetch_add(1);
    json request = {{"count", texts.size()}};
    return with_retries("embed", "", request, [&] {
        auto vectors = backend_->embed(texts, cfg_.embedding_model);
        if (vectors.size() != texts.size()) throw DimensionMismatch("embedding count mismatch");
        for (const auto& v : vectors) {
            if (v.empty() || v.size() != vectors.front().size()) throw DimensionMismatch("ragged embedding batch");
        }
        json logged = {{"count", vectors.size()}, {"dim", vectors.front().size()}};
        return std::make_pair(std::move(vectors), std::move(logged));
    });
}

GatewayStats Gateway::stats() const {
    return {chat_calls_.load(), embed_calls_.load(), attempts_.load(), retries_.load(), max_in_flight_.load()};
}

std::shared_ptr<Backend> make_backend(const GatewayConfig& cfg) {
    cfg.validate();
    if (cfg.backend == "http") return make_http_backend(cfg);
    if (cfg.backend == "mock") {
        std::map<std::string, std::string> transcript;
        if (!cfg.transcript.empty()) transcript = MockBackend::load_transcript(cfg.transcript);
        return std::make_shared<MockBackend>(std::move(transcript), cfg.seed, cfg.embedding_dim);
    }
    return make_offline_backend(cfg.seed, cfg.embedding_dim);
}

} // namespace toolforge
