#include <cstdlib>

#include <httplib.h>

#include "toolforge/error.hpp"
#include "toolforge/gateway.hpp"

namespace toolforge {

namespace {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string prefix; // path prefix without trailing slash
};

Endpoint split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    ep.origin = url.substr(0, path_start);
    ep.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
    return ep;
}

class HttpBackend : public Backend {
public:
    explicit HttpBackend(const GatewayConfig& cfg) : cfg_(cfg), endpoint_(split_url(cfg.base_url)) {
        if (const char* key = std::getenv(cfg.api_key_env.c_str())) api_key_ = key;
    }

    ChatReply chat(const ChatRequest& req) override {
        return parse_chat_response(post("/chat/completions", chat_request_body(req)));
    }

    std::vector<Embedding> embed(std::span<const std::string> texts, const std::string& model) override {
        return parse_embedding_response(post("/embeddings", embedding_request_body(texts, model)), texts.size());
    }

private:
    json post(const std::string& path, const json& body) {
        httplib::Client client(endpoint_.origin);
        auto timeout = std::chrono::duration<double>(cfg_.request_timeout_s);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto res = client.Post(endpoint_.prefix + path, headers, body.dump(), "application/json");
        if (!res) throw TransportError("POST " + path + ": " + httplib::to_string(res.error()));
        const int status = res->status;
        if (status == 429) throw RateLimited("HTTP 429 from " + path);
        if (status >= 500) throw TransportError("HTTP " + std::to_string(status) + " from " + path);
        if (status >= 400) throw BadRequest("HTTP " + std::to_string(status) + " from " + path + ": " + res->body);
        auto parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) throw TransportError("non-JSON body from " + path);
        return parsed;
    }

    GatewayConfig cfg_;
    Endpoint endpoint_;
    std::string api_key_;
};

} // namespace

std::shared_ptr<Backend> make_http_backend(const GatewayConfig& cfg) {
    return std::make_shared<HttpBackend>(cfg);
}

} // namespace toolforge
