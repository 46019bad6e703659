#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "toolforge/error.hpp"
#include "toolforge/gateway.hpp"
#include "toolforge/spec_model.hpp"
#include "toolforge/synthesis.hpp"

namespace tftest {

using namespace toolforge;

// Answers from a fixed queue and records every request.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<std::string> replies = {}) {
        for (auto& r : replies) replies_.push_back(ChatReply{std::move(r), {}, nullptr});
    }

    void push(std::string reply) {
        std::lock_guard lock(mu_);
        replies_.push_back(ChatReply{std::move(reply), {}, nullptr});
    }
    void push(ChatReply reply) {
        std::lock_guard lock(mu_);
        replies_.push_back(std::move(reply));
    }

    ChatReply chat(const ChatRequest& req) override {
        std::lock_guard lock(mu_);
        requests_.push_back(req);
        if (replies_.empty()) throw UnscriptedPrompt("script exhausted");
        ChatReply r = std::move(replies_.front());
        replies_.pop_front();
        return r;
    }

    std::vector<Embedding> embed(std::span<const std::string> texts, const std::string&) override {
        std::vector<Embedding> out;
        for (const auto& t : texts) out.push_back(hash_embedding(t, 1, 16));
        return out;
    }

    std::vector<ChatRequest> requests() const {
        std::lock_guard lock(mu_);
        return requests_;
    }
    std::size_t remaining() const {
        std::lock_guard lock(mu_);
        return replies_.size();
    }

private:
    mutable std::mutex mu_;
    std::deque<ChatReply> replies_;
    std::vector<ChatRequest> requests_;
};

// Answers through a callback; the callback must be thread-safe.
class FnBackend : public Backend {
public:
    using ChatFn = std::function<ChatReply(const ChatRequest&)>;
    explicit FnBackend(ChatFn fn) : fn_(std::move(fn)) {}

    ChatReply chat(const ChatRequest& req) override { return fn_(req); }
    std::vector<Embedding> embed(std::span<const std::string> texts, const std::string&) override {
        std::vector<Embedding> out;
        for (const auto& t : texts) out.push_back(hash_embedding(t, 1, 16));
        return out;
    }

private:
    ChatFn fn_;
};

inline ChatReply text_reply(std::string s) { return ChatReply{std::move(s), {}, nullptr}; }

inline std::unique_ptr<Gateway> make_gateway(std::shared_ptr<Backend> backend, std::string label = "test",
                                             std::shared_ptr<AuditLog> audit = nullptr, int concurrency = 8) {
    GatewayConfig cfg;
    cfg.label = std::move(label);
    cfg.backend = "mock";
    cfg.model = "scripted";
    cfg.concurrency_limit = concurrency;
    cfg.backoff_base_s = 0.0;
    auto gw = std::make_unique<Gateway>(cfg, std::move(backend), std::move(audit));
    gw->set_sleeper([](std::chrono::duration<double>) {});
    return gw;
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("toolforge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct P {
    std::string name;
    std::string description;
    std::string type;
    bool required = true;
};

inline FunctionSpec make_spec(const std::string& name, const std::vector<P>& inputs, const std::vector<P>& outputs,
                              const std::string& description = "") {
    FunctionSpec s;
    s.name = name;
    s.description = description.empty() ? "Function " + name : description;
    for (const auto& p : inputs) {
        s.inputs.push_back({p.name, p.description,
                            p.type.empty() ? std::nullopt : std::optional(ValueType::from_source(p.type)), p.required});
    }
    for (const auto& p : outputs) {
        s.outputs.push_back({p.name, p.description,
                             p.type.empty() ? std::nullopt : std::optional(ValueType::from_source(p.type)), false});
    }
    auto by_name = [](const auto& a, const auto& b) { return a.name < b.name; };
    std::sort(s.inputs.begin(), s.inputs.end(), by_name);
    std::sort(s.outputs.begin(), s.outputs.end(), by_name);
    s.id = compute_spec_id(s);
    return s;
}

// Structurally valid trajectory: user segments, each with 0-3 tool steps of
// one or two calls and a closing reply. Outcome is stopped unless `outcome`
// says otherwise.
inline Trajectory random_trajectory(std::mt19937_64& rng, const std::string& id,
                                    OutcomeKind outcome = OutcomeKind::Stopped) {
    Trajectory t;
    t.id = id;
    t.intent.chain_id = "chain-" + id;
    t.intent.task_instruction = "task " + id;
    t.intent.tool_usage = "f";
    t.tools.push_back(json{{"name", "f"}});
    t.outcome.kind = outcome;
    if (outcome == OutcomeKind::Aborted) t.outcome.reason = "loop";
    const int segments = 1 + static_cast<int>(rng() % 4);
    for (int s = 0; s < segments; ++s) {
        t.messages.push_back({Role::User, {}, "question " + std::to_string(s), {}, nullptr, {}});
        const int steps = static_cast<int>(rng() % 4);
        for (int k = 0; k < steps; ++k) {
            Message call{Role::Assistant, "why", "", {}, nullptr, {}};
            const int calls = 1 + static_cast<int>(rng() % 2);
            for (int c = 0; c < calls; ++c) call.tool_calls.push_back({"", "f", json{{"k", k}}});
            t.messages.push_back(call);
            for (int c = 0; c < calls; ++c) t.messages.push_back({Role::Tool, {}, {}, {}, json{{"ok", c}}, "f"});
        }
        t.messages.push_back({Role::Assistant, {}, "answer " + std::to_string(s), {}, nullptr, {}});
    }
    return t;
}

// ---- reference trajectory: warehouse stock, inventory and IP check -----------
// Three user turns, each answered by one tool call and one reply. The first
// call passes its arguments as the string "{}".
namespace warehouse {

inline std::vector<FunctionSpec> tools() {
    const char* raw[] = {
        R"J({"name":"getStockLocations","description":"Retrieves a list of stock locations for an eCommerce application.","parameters":{"type":"dict","properties":{"limit":{"description":"Limits the number of items on a page (max 100).","type":"float"}},"required":[]},"required":null})J",
        R"J({"name":"checkInventory","description":"Check the inventory of a specific product","parameters":{"type":"dict","properties":{"product_code":{"type":"string","description":"The code of the product to check inventory for (e.g., ABC123)"},"location":{"type":"string","description":"The location to check inventory at (e.g., warehouse A, store B)"}},"required":["product_code"]},"required":null})J",
        R"J({"name":"checkIpAddress","description":"Check if an IP address is safe or not.","parameters":{"type":"dict","properties":{"ip_address":{"type":"string","description":"The IP address to be checked for safety"}},"required":["ip_address"]},"required":null})J",
    };
    std::vector<FunctionSpec> out;
    for (const char* r : raw) out.push_back(parse_function_spec(std::string_view(r), {"example", "warehouse"}));
    return out;
}

inline UserIntent intent() {
    UserIntent i;
    i.chain_id = "chain-00000";
    i.task_instruction =
        "I'm a warehouse manager for an eCommerce company. First, I need to check where our inventory is stored by "
        "retrieving the stock locations. Then, I want to verify the availability of product 'XYZ789' specifically "
        "at 'warehouse C' to plan restocking. Finally, I need to ensure our system's security by checking if the IP "
        "address 192.168.1.100 is safe.";
    i.tool_usage = json::array({"getStockLocations", "checkInventory", "checkIpAddress"});
    return i;
}

inline std::vector<std::string> user_replies() {
    return {
        "Can you retrieve the current stock locations for me?",
        "Can you check the availability of product XYZ789 at Distribution Center C?",
        "Is the IP address 192.168.1.100 flagged as a security risk in our system?",
        "###STOP###",
    };
}

inline std::vector<std::string> assistant_replies() {
    return {
        "<think>Okay, the user is asking to retrieve the current stock locations. Since the function doesn't require "
        "any parameters, I can call it without any arguments.</think>\n<tool_call>\n"
        R"J({"name":"getStockLocations", "arguments":"{}"})J"
        "\n</tool_call>",
        "<think>Okay, let me process the user's request. The response came back with three locations.</think>\n"
        "Here are the current stock locations retrieved:1. **Warehouse A** 2. **Store B** 3. **Distribution Center "
        "C** There are **5 total pages** of results. Would you like to check inventory for a specific product?",
        "<think>Okay, the user is asking to check the availability of product XYZ789 at Distribution Center C. "
        "There's the checkInventory function.</think>\n<tool_call>\n"
        R"J({"name": "checkInventory", "arguments": "{\"product_code\": \"XYZ789\"}"})J"
        "\n</tool_call>",
        "<think>The response shows 150 units available, last updated on October 5th.</think>\n"
        "Here is the inventory availability for product **XYZ789** at **Distribution Center C**:- **Available "
        "Quantity:** 150 units - **Last Updated:** October 5, 2023, 2:30 PM UTC",
        "<think>\nOkay, the user is asking if the IP address 192.168.1.100 is flagged as a security risk. There's a "
        "function called checkIpAddress.\n</think>\n<tool_call>\n"
        R"J({"name": "checkIpAddress", "arguments": "{\"ip_address\": \"192.168.1.100\"}"})J"
        "\n</tool_call>",
        "<think>The response says it's marked as safe because it's a private IP address under RFC 1918.</think>\n"
        "The IP address **192.168.1.100** is **not flagged as a security risk** in our system. It is categorized "
        "as a **private IP address**.",
    };
}

inline std::vector<std::string> tool_replies() {
    return {
        R"J(<func_return>{"stock_locations": [{"id": 1, "name": "Warehouse A", "address": "123 Main St, Cityville", "capacity": 5000}, {"id": 2, "name": "Store B", "address": "456 Oak Ave, Townsburg", "capacity": 2000}, {"id": 3, "name": "Distribution Center C", "address": "789 Pine Rd, Countryside", "capacity": 10000}], "pagination": {"page": 1, "total_pages": 5}}</func_return>)J",
        R"J(<func_return>{"product_code": "XYZ789", "location": "Distribution Center C", "available_quantity": 150, "last_updated": "2023-10-05T14:30:00Z"}</func_return>)J",
        R"J(<func_return>{"status": "safe", "ip_address": "192.168.1.100", "reason": "Private IP address (RFC 1918 compliant)"}</func_return>)J",
    };
}

} // namespace warehouse

} // namespace tftest
