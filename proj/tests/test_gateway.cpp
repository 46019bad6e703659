#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "support.hpp"

using namespace toolforge;

namespace {

// Local OpenAI-compatible server on an ephemeral port.
class FakeServer {
public:
    FakeServer() { port_ = server_.bind_to_any_port("127.0.0.1"); }
    ~FakeServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }
    httplib::Server& server() { return server_; }
    void start() {
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

std::string chat_ok(const std::string& text) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}, {"usage", {{"total_tokens", 3}}}}
        .dump();
}

std::unique_ptr<Gateway> http_gateway(const std::string& url, std::shared_ptr<AuditLog> audit = nullptr,
                                      int concurrency = 8) {
    GatewayConfig cfg;
    cfg.label = "http";
    cfg.backend = "http";
    cfg.base_url = url;
    cfg.api_key_env = "TOOLFORGE_TEST_KEY";
    cfg.request_timeout_s = 5;
    cfg.max_retries = 3;
    cfg.backoff_base_s = 0.0;
    cfg.concurrency_limit = concurrency;
    auto gw = std::make_unique<Gateway>(cfg, make_backend(cfg), audit);
    gw->set_sleeper([](std::chrono::duration<double>) {});
    return gw;
}

ChatRequest simple_request(const std::string& text) {
    ChatRequest req;
    req.messages.push_back({Role::User, text, {}, {}});
    return req;
}

double cosine(const Embedding& a, const Embedding& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return d / std::sqrt(na * nb);
}

} // namespace

TEST_SUITE("gateway") {

TEST_CASE("fingerprints ignore incidental whitespace but not content or model") {
    ChatRequest a = simple_request("Hello   world\n");
    ChatRequest b = simple_request(" Hello world");
    a.model = b.model = "m";
    CHECK(prompt_fingerprint(a) == prompt_fingerprint(b));
    b.model = "other";
    CHECK(prompt_fingerprint(a) != prompt_fingerprint(b));
    ChatRequest c = simple_request("Hello world!");
    c.model = "m";
    CHECK(prompt_fingerprint(a) != prompt_fingerprint(c));
    ChatRequest d = a;
    d.messages[0].role = Role::System;
    CHECK(prompt_fingerprint(a) != prompt_fingerprint(d));
}

TEST_CASE("wire format") {
    ChatRequest req = simple_request("hi");
    req.model = "m";
    req.seed = 5;
    req.tools = json::array({json{{"type", "function"}, {"function", {{"name", "f"}}}}});
    req.messages.push_back({Role::Assistant, "", {{"call_0", "f", json{{"x", 1}}}}, {}});
    req.messages.push_back({Role::Tool, "{\"ok\":true}", {}, "call_0"});
    auto body = chat_request_body(req);
    CHECK(body["model"] == "m");
    CHECK(body["seed"] == 5);
    CHECK(body["messages"][1]["tool_calls"][0]["function"]["arguments"] == "{\"x\":1}");
    CHECK(body["messages"][2]["tool_call_id"] == "call_0");
    CHECK(body["tools"].size() == 1);

    auto reply = parse_chat_response(json::parse(R"({"choices":[{"message":{"content":null,"tool_calls":[
        {"id":"c1","type":"function","function":{"name":"f","arguments":"{\"a\":2}"}}]}}]})"));
    CHECK(reply.content.empty());
    REQUIRE(reply.tool_calls.size() == 1);
    CHECK(reply.tool_calls[0].arguments["a"] == 2);

    CHECK_THROWS_AS(parse_embedding_response(json::parse(R"({"data":[{"index":0,"embedding":[1,2]}]})"), 2),
                    DimensionMismatch);
    CHECK_THROWS_AS(parse_embedding_response(
                        json::parse(R"({"data":[{"index":0,"embedding":[1,2]},{"index":1,"embedding":[1]}]})"), 2),
                    DimensionMismatch);
    auto vecs = parse_embedding_response(
        json::parse(R"({"data":[{"index":1,"embedding":[3,4]},{"index":0,"embedding":[1,2]}]})"), 2);
    CHECK(vecs[0] == Embedding{1, 2});
    CHECK(vecs[1] == Embedding{3, 4});
}

TEST_CASE("hash embeddings are deterministic, unit norm and seed sensitive") {
    auto a = hash_embedding("DESC city TYPE string", 3, 64);
    auto b = hash_embedding("DESC city TYPE string", 3, 64);
    auto c = hash_embedding("DESC town TYPE string", 3, 64);
    auto d = hash_embedding("DESC city TYPE string", 4, 64);
    CHECK(a == b);
    CHECK(a != d);
    double n = 0;
    for (double x : a) n += x * x;
    CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-9);
    CHECK(std::fabs(cosine(a, a) - 1.0) < 1e-9);
    const double cc = cosine(a, c);
    CHECK(cc >= -1.0);
    CHECK(cc <= 1.0);
    CHECK(hash_embedding("x", 1, 7).size() == 7);
}

TEST_CASE("mock backend answers from its transcript") {
    ChatRequest req = simple_request("What is 2+2?");
    req.model = "scripted";
    std::map<std::string, std::string> transcript{{prompt_fingerprint(req), "4"}};
    auto backend = std::make_shared<MockBackend>(transcript, 1, 8);
    auto gw = tftest::make_gateway(backend);
    CHECK(gw->chat(req).content == "4");
    CHECK(gw->chat(req).content == "4");
    try {
        gw->chat(simple_request("unknown"));
        FAIL("expected UnscriptedPrompt");
    } catch (const UnscriptedPrompt& e) {
        ChatRequest u = simple_request("unknown");
        u.model = "scripted";
        CHECK(std::string(e.what()).find(prompt_fingerprint(u)) != std::string::npos);
    }
    std::vector<std::string> texts{"a", "b", "a"};
    auto v = gw->embed(texts);
    REQUIRE(v.size() == 3);
    CHECK(v[0] == v[2]);
    CHECK(v[0] != v[1]);
}

TEST_CASE("retry policy") {
    SUBCASE("rate limits are retried") {
        std::atomic<int> calls{0};
        auto backend = std::make_shared<tftest::FnBackend>([&](const ChatRequest&) {
            if (calls++ < 2) throw RateLimited("429");
            return tftest::text_reply("ok");
        });
        auto audit = std::make_shared<AuditLog>();
        auto gw = tftest::make_gateway(backend, "t", audit);
        CHECK(gw->chat(simple_request("x")).content == "ok");
        CHECK(gw->stats().retries == 2);
        CHECK(gw->stats().attempts == 3);
        CHECK(audit->count("t", "chat") == 3);
    }
    SUBCASE("bad requests are not retried") {
        std::atomic<int> calls{0};
        auto backend = std::make_shared<tftest::FnBackend>([&](const ChatRequest&) -> ChatReply {
            ++calls;
            throw BadRequest("400");
        });
        auto gw = tftest::make_gateway(backend);
        CHECK_THROWS_AS(gw->chat(simple_request("x")), BadRequest);
        CHECK(calls == 1);
        CHECK(gw->stats().retries == 0);
    }
    SUBCASE("transport errors surface after max_retries") {
        std::atomic<int> calls{0};
        auto backend = std::make_shared<tftest::FnBackend>([&](const ChatRequest&) -> ChatReply {
            ++calls;
            throw TransportError("down");
        });
        auto gw = tftest::make_gateway(backend);
        CHECK_THROWS_AS(gw->chat(simple_request("x")), TransportError);
        CHECK(calls == 1 + gw->config().max_retries);
    }
    SUBCASE("backoff grows exponentially") {
        std::vector<double> sleeps;
        std::atomic<int> calls{0};
        auto backend = std::make_shared<tftest::FnBackend>([&](const ChatRequest&) {
            if (calls++ < 3) throw TransportError("down");
            return tftest::text_reply("ok");
        });
        GatewayConfig cfg;
        cfg.backoff_base_s = 0.5;
        Gateway gw(cfg, backend);
        gw.set_sleeper([&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); });
        gw.chat(simple_request("x"));
        CHECK(sleeps == std::vector<double>{0.5, 1.0, 2.0});
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(gateway_config_from_json(json{{"api_key", "sk-123"}}), ConfigError);
    CHECK_THROWS_AS(gateway_config_from_json(json{{"max_retries", "three"}}), ConfigError);
    GatewayConfig bad;
    bad.concurrency_limit = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.concurrency_limit = 1;
    bad.max_retries = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    auto round = gateway_config_from_json(to_json(GatewayConfig{}));
    CHECK(to_json(round) == to_json(GatewayConfig{}));
}

TEST_CASE("http: 429 then 200 succeeds with one retry") {
    FakeServer fake;
    std::atomic<int> hits{0};
    fake.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 429;
            res.set_content("{}", "application/json");
            return;
        }
        res.set_content(chat_ok("hello"), "application/json");
    });
    fake.start();
    auto audit = std::make_shared<AuditLog>();
    auto gw = http_gateway(fake.base_url(), audit);
    CHECK(gw->chat(simple_request("hi")).content == "hello");
    CHECK(hits == 2);
    CHECK(gw->stats().retries == 1);
    auto entries = audit->entries();
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].status == "rate_limited");
    CHECK(entries[1].status == "ok");
}

TEST_CASE("http: 400 is a BadRequest without retries") {
    FakeServer fake;
    std::atomic<int> hits{0};
    fake.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content(R"({"error":"bad"})", "application/json");
    });
    fake.start();
    auto gw = http_gateway(fake.base_url());
    CHECK_THROWS_AS(gw->chat(simple_request("hi")), BadRequest);
    CHECK(hits == 1);
    CHECK(gw->stats().retries == 0);
}

TEST_CASE("http: request body, bearer key and embeddings") {
    FakeServer fake;
    std::string auth;
    json seen;
    fake.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        seen = json::parse(req.body);
        res.set_content(chat_ok("fine"), "application/json");
    });
    fake.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        json data = json::array();
        for (std::size_t i = 0; i < body["input"].size(); ++i) {
            data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), 1.0}}});
        }
        res.set_content(json{{"data", data}}.dump(), "application/json");
    });
    fake.start();
    ::setenv("TOOLFORGE_TEST_KEY", "sk-test", 1);
    auto gw = http_gateway(fake.base_url());
    ::unsetenv("TOOLFORGE_TEST_KEY");
    CHECK(gw->chat(simple_request("hi")).content == "fine");
    CHECK(auth == "Bearer sk-test");
    CHECK(seen["messages"][0]["content"] == "hi");
    CHECK(seen["model"] == gw->config().model);
    std::vector<std::string> texts{"a", "b", "c"};
    auto v = gw->embed(texts);
    REQUIRE(v.size() == 3);
    CHECK(v[2] == Embedding{2.0, 1.0});
}

TEST_CASE("http: in-flight requests never exceed the concurrency limit") {
    FakeServer fake;
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    fake.server().new_task_queue = [] { return new httplib::ThreadPool(8); };
    fake.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        --in_flight;
        res.set_content(chat_ok("x"), "application/json");
    });
    fake.start();
    auto gw = http_gateway(fake.base_url(), nullptr, 2);
    parallel_for(12, 6, [&](std::size_t) { gw->chat(simple_request("x")); });
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
    CHECK(gw->stats().max_in_flight <= 2);
    CHECK(gw->stats().chat_calls == 12);
}

TEST_CASE("audit log mirrors to a JSONL file") {
    tftest::TempDir dir;
    {
        auto audit = std::make_shared<AuditLog>(dir / "audit.jsonl");
        auto backend = std::make_shared<tftest::ScriptedBackend>(std::vector<std::string>{"a", "b"});
        auto gw = tftest::make_gateway(backend, "judge", audit);
        gw->chat(simple_request("1"));
        gw->chat(simple_request("2"));
    }
    auto rows = read_jsonl(dir / "audit.jsonl");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["gateway"] == "judge");
    CHECK(rows[0].contains("ts_ms"));
    CHECK(rows[0].contains("latency_ms"));
}

}
