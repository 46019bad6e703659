#include <algorithm>

#include "toolforge/error.hpp"
#include "toolforge/gateway.hpp"
#include "toolforge/prompts.hpp"

namespace toolforge {

namespace {

using prompts::Kind;

std::string_view between(std::string_view text, std::string_view open, std::string_view close) {
    auto b = text.find(open);
    if (b == std::string_view::npos) return {};
    b += open.size();
    auto e = close.empty() ? text.size() : text.find(close, b);
    if (e == std::string_view::npos) e = text.size();
    return text.substr(b, e - b);
}

std::vector<json> parse_listing(std::string_view listing) {
    std::vector<json> out;
    std::size_t pos = 0;
    while (pos < listing.size()) {
        auto end = listing.find("\n\n", pos);
        if (end == std::string_view::npos) end = listing.size();
        auto j = json::parse(listing.substr(pos, end - pos), nullptr, false);
        if (!j.is_discarded() && j.is_object()) out.push_back(std::move(j));
        pos = end + 2;
    }
    return out;
}

json placeholder(const std::string& type, const std::string& name, std::uint64_t h) {
    if (type == "int" || type == "integer") return static_cast<int>(h % 100);
    if (type == "float" || type == "number") return static_cast<double>(h % 1000) / 10.0;
    if (type == "boolean") return (h & 1) == 1;
    if (type == "list" || type == "array") return json::array({name + "-" + std::to_string(h % 97)});
    if (type == "dict" || type == "object") return json{{"id", name + "-" + std::to_string(h % 997)}};
    return name + "-" + std::to_string(h % 9973);
}

// Tools arrive either in the raw-record shape of the inline listing or as
// native OpenAI tool objects; both reduce to (name, properties, required).
struct ToolView {
    std::string name;
    json properties = json::object();
    json required = json::array();
};

ToolView tool_view(const json& t) {
    const json& f = t.contains("function") ? t["function"] : t;
    ToolView v;
    v.name = f.value("name", "");
    if (f.contains("parameters") && f["parameters"].is_object()) {
        v.properties = f["parameters"].value("properties", json::object());
        v.required = f["parameters"].value("required", json::array());
    }
    return v;
}

json arguments_for(const ToolView& tool, std::uint64_t h) {
    json args = json::object();
    for (const auto& name : tool.required) {
        if (!name.is_string()) continue;
        const auto key = name.get<std::string>();
        std::string type = "string";
        if (tool.properties.contains(key)) type = tool.properties[key].value("type", "string");
        args[key] = placeholder(type, key, mix64(h ^ fnv1a64(key)));
    }
    return args;
}

class OfflineBackend : public Backend {
public:
    OfflineBackend(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {}

    ChatReply chat(const ChatRequest& req) override {
        if (req.messages.empty()) throw UnscriptedPrompt("offline backend: empty request");
        const std::string& lead = req.messages.front().content;
        const std::uint64_t h = mix64(fnv1a64(lead) ^ mix64(seed_ ^ req.seed.value_or(0)));
        ChatReply reply;
        switch (prompts::classify(lead)) {
        case Kind::CompleteInput: reply.content = complete(lead, "input", h); break;
        case Kind::CompleteOutput: reply.content = complete(lead, "output", h); break;
        case Kind::EdgeValidator: reply.content = validator(h); break;
        case Kind::UserIntent: reply.content = intent(lead); break;
        case Kind::UserSimulator: reply.content = user_turn(req, h); break;
        case Kind::AssistantSystem: return assistant_turn(req);
        case Kind::ToolSimulator: reply.content = tool_result(lead, h); break;
        case Kind::TrajectoryJudge: reply.content = h % 10 == 0 ? "0" : "1"; break;
        case Kind::TurnJudge: reply.content = h % 8 == 0 ? "0" : "1"; break;
        case Kind::DomainClassifier: reply.content = domains(h); break;
        case Kind::Unknown: throw UnscriptedPrompt("offline backend: unrecognized prompt");
        }
        return reply;
    }

    std::vector<Embedding> embed(std::span<const std::string> texts, const std::string&) override {
        std::vector<Embedding> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(hash_embedding(t, seed_, dim_));
        return out;
    }

private:
    static std::string complete(const std::string& prompt, const std::string& side, std::uint64_t h) {
        auto fn = json::parse(between(prompt, "The function is: ", ""), nullptr, false);
        if (fn.is_discarded() || !fn.is_object()) return "{}";
        const std::string name = fn.value("name", "function");
        json structure = json::array();
        if (side == "input") {
            const json props = fn.contains("parameters") ? fn["parameters"].value("properties", json::object())
                                                          : json::object();
            for (const auto& [pname, p] : props.items()) {
                std::string desc = p.value("description", "");
                if (desc.empty()) desc = "The " + pname + " passed to " + name;
                std::string type = p.value("type", "");
                if (type.empty()) type = "string";
                structure.push_back({{"name", pname}, {"description", desc}, {"type", type}});
            }
        } else {
            const json outs = fn.value("outputs", json::array());
            for (const auto& o : outs) {
                std::string desc = o.value("description", "");
                if (desc.empty()) desc = "The " + o.value("name", "value") + " returned by " + name;
                std::string type = o.value("type", "");
                if (type.empty()) type = "string";
                structure.push_back({{"name", o.value("name", "value")}, {"description", desc}, {"type", type}});
            }
            if (structure.empty()) {
                structure.push_back({{"name", "result"}, {"description", "output of " + name}, {"type", "dict"}});
            }
        }
        json reply = {{side + " description", "Predicted " + side + " of " + name + " (" + std::to_string(h % 1000) + ")"},
                      {side + " structure", std::move(structure)}};
        return reply.dump();
    }

    static std::string validator(std::uint64_t h) {
        json reply = {{"Field transitivity", static_cast<int>(5 + h % 5)},
                      {"Potential user intent path coherence", static_cast<int>(6 + (h >> 8) % 4)}};
        return reply.dump();
    }

    static std::string intent(const std::string& prompt) {
        auto tools = parse_listing(between(prompt, "### Tools\n\n", "\n\nPlease output"));
        std::string task = "I am working on a small project and need help";
        json usage = json::array();
        for (std::size_t i = 0; i < tools.size(); ++i) {
            const std::string name = tools[i].value("name", "");
            task += i == 0 ? ": first " : (i + 1 == tools.size() ? ", and finally " : ", then ");
            task += "use " + name;
            usage.push_back(name);
        }
        task += ".";
        return json{{"Task Instruction", task}, {"Tool Usage", usage}}.dump();
    }

    static std::string user_turn(const ChatRequest& req, std::uint64_t h) {
        std::size_t own = 0;
        for (const auto& m : req.messages) own += m.role == Role::Assistant ? 1 : 0;
        const std::size_t stop_after = 2 + h % 3;
        if (own >= stop_after) return std::string(prompts::kStopMarker);
        if (own == 0) {
            const std::string intent = std::string(between(req.messages.front().content, "### Your intent:\n\n", "\n\n"));
            return "Hi, could you help me? " + intent.substr(0, intent.find(','));
        }
        static const char* kFollowUps[] = {
            "Thanks. What is the next step?",
            "Okay, that makes sense. Can you go on with the rest?",
            "Good. Please continue with the next part of my request.",
            "Great, and what comes after that?",
        };
        return kFollowUps[(h >> 4 ^ own) % 4];
    }

    ChatReply assistant_turn(const ChatRequest& req) const {
        std::vector<ToolView> tools;
        if (req.tools.is_array() && !req.tools.empty()) {
            for (const auto& t : req.tools) tools.push_back(tool_view(t));
        } else {
            for (const auto& t : parse_listing(between(req.messages.front().content, "### Available tools\n\n", "")))
                tools.push_back(tool_view(t));
        }
        std::size_t users = 0, calls_total = 0, steps_since_user = 0;
        for (const auto& m : req.messages) {
            if (m.role == Role::User) {
                ++users;
                steps_since_user = 0;
            } else if (m.role == Role::Assistant && !m.tool_calls.empty()) {
                calls_total += m.tool_calls.size();
                ++steps_since_user;
            }
        }
        const std::uint64_t turn_key = mix64(seed_ ^ req.seed.value_or(0) ^ (users * 0x9e3779b97f4a7c15ULL));
        const std::size_t roll = turn_key % 10;
        const std::size_t run = users == 1 ? 1 : (roll < 2 ? 0 : (roll < 7 ? 1 : 2));

        ChatReply reply;
        if (tools.empty() || steps_since_user >= run) {
            const Role last = req.messages.back().role;
            if (last == Role::Tool) {
                reply.content = "<think>The tool returned what the user needs.</think>Here is what I found: " +
                                req.messages.back().content;
            } else {
                reply.content = "<think>The request needs one more detail before calling a tool.</think>"
                                "Could you tell me a bit more about what you need?";
            }
            return reply;
        }
        const ToolView& tool = tools[calls_total % tools.size()];
        json args = arguments_for(tool, mix64(turn_key ^ calls_total));
        const std::string think = "<think>I should call " + tool.name + " for this step.</think>";
        if (req.tools.is_array() && !req.tools.empty()) {
            reply.content = think;
            reply.tool_calls.push_back({"call_" + std::to_string(calls_total), tool.name, std::move(args)});
        } else {
            reply.content = think + "\n<tool_call>\n" + json{{"name", tool.name}, {"arguments", args}}.dump() +
                            "\n</tool_call>";
        }
        return reply;
    }

    static std::string tool_result(const std::string& prompt, std::uint64_t h) {
        auto calls = json::parse(between(prompt, "### Function call\n\n", "\n\nGiven this function call"), nullptr, false);
        std::string name;
        if (calls.is_array() && !calls.empty() && calls[0].is_object()) name = calls[0].value("name", "");
        auto info = json::parse(between(prompt, "### Function info\n\n", "\n\n### Function call"), nullptr, false);
        json result;
        if (!info.is_discarded() && info.is_object() && info.value("name", "") == name) {
            result = json::object();
            for (const auto& o : info.value("outputs", json::array())) {
                const std::string oname = o.value("name", "value");
                result[oname] = placeholder(o.value("type", "string"), oname, mix64(h ^ fnv1a64(oname)));
            }
        } else {
            result = {{"error", "unknown function '" + name + "'"}};
        }
        return "<func_return> " + result.dump() + " </func_return>";
    }

    static std::string domains(std::uint64_t h) {
        static const char* kLabels[] = {"data analysis", "finance", "travel", "entertainment",
                                        "productivity", "e-commerce", "health", "education"};
        constexpr std::size_t n = std::size(kLabels);
        json labels = json::array({kLabels[h % n]});
        if ((h >> 20) % 3 == 0) {
            const char* second = kLabels[(h >> 32) % n];
            if (labels[0] != second) labels.push_back(second);
        }
        return json{{"domains", labels}}.dump();
    }

    std::uint64_t seed_;
    int dim_;
};

} // namespace

std::shared_ptr<Backend> make_offline_backend(std::uint64_t seed, int dim) {
    return std::make_shared<OfflineBackend>(seed, dim);
}

} // namespace toolforge
