#include "toolforge/synthesis.hpp"

#include <algorithm>

#include "toolforge/error.hpp"
#include "toolforge/prompts.hpp"

namespace toolforge {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kCallOpen = "<tool_call>";
constexpr std::string_view kCallClose = "</tool_call>";
constexpr std::string_view kReturnOpen = "<func_return>";
constexpr std::string_view kReturnClose = "</func_return>";

ToolCall tool_call_from_json(const json& j) {
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty()) {
        throw MalformedToolCall("tool call without a name");
    }
    ToolCall call;
    call.name = j["name"].get<std::string>();
    if (j.contains("arguments") && !j["arguments"].is_null()) {
        const auto& args = j["arguments"];
        if (args.is_string()) {
            // Several corpora encode arguments as a JSON string.
            auto parsed = json::parse(args.get<std::string>(), nullptr, false);
            if (parsed.is_discarded() || !parsed.is_object()) {
                throw MalformedToolCall("arguments of '" + call.name + "' are not a JSON object");
            }
            call.arguments = std::move(parsed);
        } else if (args.is_object()) {
            call.arguments = args;
        } else {
            throw MalformedToolCall("arguments of '" + call.name + "' are not a JSON object");
        }
    }
    return call;
}

std::string tools_listing(const std::vector<FunctionSpec>& tools) {
    std::string out;
    for (const auto& t : tools) {
        if (!out.empty()) out += "\n\n";
        out += tool_schema(t).dump();
    }
    return out;
}

json calls_json(const std::vector<ToolCall>& calls) {
    json arr = json::array();
    for (const auto& c : calls) arr.push_back({{"name", c.name}, {"arguments", c.arguments}});
    return arr;
}

// The user simulator sees the dialogue from its own side: its past turns
// are "assistant", the assistant's visible replies are "user".
ChatRequest user_agent_request(const UserIntent& intent, const std::vector<Message>& history, std::uint64_t seed,
                               const SimLimits& limits) {
    ChatRequest req;
    req.seed = seed;
    req.max_turn_tokens = limits.max_message_tokens;
    req.messages.push_back({Role::System, prompts::user_simulator(intent.task_instruction), {}, {}});
    req.messages.push_back({Role::User, std::string(prompts::kUserSimulatorKickoff), {}, {}});
    for (const auto& m : history) {
        Role as;
        if (m.role == Role::User) as = Role::Assistant;
        else if (m.role == Role::Assistant && !m.content.empty()) as = Role::User;
        else continue;
        if (req.messages.back().role == as && req.messages.size() > 2) {
            req.messages.back().content += "\n\n" + m.content;
        } else {
            req.messages.push_back({as, m.content, {}, {}});
        }
    }
    return req;
}

ChatRequest assistant_request(const std::vector<FunctionSpec>& tools, bool native, const std::vector<Message>& history,
                              std::uint64_t seed, const SimLimits& limits) {
    ChatRequest req;
    req.seed = seed;
    req.max_turn_tokens = limits.max_message_tokens;
    req.messages.push_back({Role::System, prompts::assistant_system(native ? "" : tools_listing(tools)), {}, {}});
    if (native) {
        req.tools = json::array();
        for (const auto& t : tools) req.tools.push_back(openai_tool(t));
    }
    int call_counter = 0;
    std::vector<std::string> pending_ids;
    for (const auto& m : history) {
        if (m.role == Role::User) {
            req.messages.push_back({Role::User, m.content, {}, {}});
        } else if (m.role == Role::Assistant) {
            ChatMessage cm{Role::Assistant, m.content, m.tool_calls, {}};
            pending_ids.clear();
            for (auto& c : cm.tool_calls) {
                c.id = "call_" + std::to_string(call_counter++);
                pending_ids.push_back(c.id);
            }
            req.messages.push_back(std::move(cm));
        } else if (m.role == Role::Tool) {
            std::string id;
            if (!pending_ids.empty()) {
                id = pending_ids.front();
                pending_ids.erase(pending_ids.begin());
            }
            req.messages.push_back({Role::Tool, m.tool_result.dump(), {}, id});
        }
    }
    return req;
}

std::size_t count_substr(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
    return n;
}

} // namespace

void SimLimits::validate() const {
    if (max_user_turns < 1 || max_consecutive_tool_steps < 1 || max_message_tokens < 1) {
        throw ConfigError("simulation limits must be positive");
    }
    if (assistant_retries < 0 || tool_retries < 0) throw ConfigError("simulation retries must be >= 0");
}

json to_json(const SimLimits& l) {
    return {{"max_user_turns", l.max_user_turns},
            {"max_consecutive_tool_steps", l.max_consecutive_tool_steps},
            {"max_message_tokens", l.max_message_tokens},
            {"assistant_retries", l.assistant_retries},
            {"tool_retries", l.tool_retries}};
}

SimLimits sim_limits_from_json(const json& j, SimLimits l) {
    if (!j.is_object()) throw ConfigError("simulation config must be an object");
    try {
        l.max_user_turns = j.value("max_user_turns", l.max_user_turns);
        l.max_consecutive_tool_steps = j.value("max_consecutive_tool_steps", l.max_consecutive_tool_steps);
        l.max_message_tokens = j.value("max_message_tokens", l.max_message_tokens);
        l.assistant_retries = j.value("assistant_retries", l.assistant_retries);
        l.tool_retries = j.value("tool_retries", l.tool_retries);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("simulation config: ") + e.what());
    }
    l.validate();
    return l;
}

// ---- intents ------------------------------------------------------------------

std::optional<UserIntent> parse_intent_reply(std::string_view reply, const std::string& chain_id) {
    auto obj = parse_json_object_strict(reply);
    if (!obj || obj->size() != 2 || !obj->contains("Task Instruction") || !obj->contains("Tool Usage")) {
        return std::nullopt;
    }
    const auto& task = (*obj)["Task Instruction"];
    const auto& usage = (*obj)["Tool Usage"];
    if (!task.is_string() || trim(task.get<std::string>()).empty()) return std::nullopt;
    if (!usage.is_string() && !usage.is_array()) return std::nullopt;
    UserIntent intent;
    intent.chain_id = chain_id;
    intent.task_instruction = trim(task.get<std::string>());
    intent.tool_usage = usage;
    return intent;
}

UserIntent synthesize_intent(Gateway& gw, const FunctionChain& chain, const std::map<std::string, FunctionSpec>& corpus,
                             int retries) {
    std::vector<FunctionSpec> tools;
    std::vector<std::string> seen;
    for (const auto& id : chain.steps) {
        auto it = corpus.find(id);
        if (it == corpus.end()) throw Error("chain " + chain.id + " references unknown spec " + id);
        // A walk may revisit a node; list each tool once.
        if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
        seen.push_back(id);
        tools.push_back(it->second);
    }
    ChatRequest req;
    req.messages.push_back({Role::User, prompts::user_intent(tools_listing(tools)), {}, {}});
    for (int attempt = 0; attempt <= retries; ++attempt) {
        ChatReply reply = gw.chat(req);
        if (auto intent = parse_intent_reply(reply.content, chain.id)) return *intent;
        req.messages.push_back({Role::Assistant, reply.content, {}, {}});
        req.messages.push_back(
            {Role::User, prompts::format_reminder("a JSON object with exactly the fields \"Task Instruction\" and \"Tool Usage\""),
             {}, {}});
    }
    throw IntentFormatError("no valid intent for " + chain.id);
}

// ---- message formats ------------------------------------------------------------

Message parse_assistant_message(std::string_view text) {
    return parse_assistant_message(ChatReply{std::string(text), {}, nullptr});
}

Message parse_assistant_message(const ChatReply& reply) {
    Message m;
    m.role = Role::Assistant;
    std::string rest = reply.content;

    if (auto open = rest.find(kThinkOpen); open != std::string::npos) {
        auto close = rest.find(kThinkClose, open);
        if (close == std::string::npos) {
            m.think = trim(rest.substr(open + kThinkOpen.size()));
            rest.erase(open);
        } else {
            m.think = trim(rest.substr(open + kThinkOpen.size(), close - open - kThinkOpen.size()));
            rest.erase(open, close + kThinkClose.size() - open);
        }
    } else if (auto close = rest.find(kThinkClose); close != std::string::npos) {
        // Some chat templates pre-fill the opening tag.
        m.think = trim(rest.substr(0, close));
        rest.erase(0, close + kThinkClose.size());
    }

    std::vector<ToolCall> tagged;
    for (auto open = rest.find(kCallOpen); open != std::string::npos; open = rest.find(kCallOpen, open)) {
        auto close = rest.find(kCallClose, open);
        if (close == std::string::npos) throw MalformedToolCall("unterminated <tool_call>");
        std::string body = trim(rest.substr(open + kCallOpen.size(), close - open - kCallOpen.size()));
        auto parsed = json::parse(body, nullptr, false);
        if (parsed.is_discarded()) throw MalformedToolCall("tool call is not valid JSON: " + body.substr(0, 80));
        if (parsed.is_array()) {
            for (const auto& item : parsed) tagged.push_back(tool_call_from_json(item));
        } else {
            tagged.push_back(tool_call_from_json(parsed));
        }
        rest.erase(open, close + kCallClose.size() - open);
    }
    m.content = trim(rest);

    if (!reply.tool_calls.empty()) {
        for (const auto& native : reply.tool_calls) {
            m.tool_calls.push_back(tool_call_from_json({{"name", native.name}, {"arguments", native.arguments}}));
        }
    } else {
        m.tool_calls = std::move(tagged);
    }
    if (m.content.empty() && m.tool_calls.empty()) throw MalformedToolCall("assistant turn has neither content nor tool calls");
    return m;
}

std::optional<json> parse_func_return(std::string_view reply) {
    if (count_substr(reply, kReturnOpen) != 1 || count_substr(reply, kReturnClose) != 1) return std::nullopt;
    auto open = reply.find(kReturnOpen);
    auto close = reply.find(kReturnClose);
    if (close < open) return std::nullopt;
    auto body = reply.substr(open + kReturnOpen.size(), close - open - kReturnOpen.size());
    auto parsed = json::parse(strip_code_fence(body), nullptr, false);
    if (parsed.is_discarded()) return std::nullopt;
    return parsed;
}

Message simulate_tool(Gateway& gw, const FunctionSpec* spec, const std::vector<FunctionSpec>& tools, const ToolCall& call,
                      std::uint64_t seed, int retries) {
    const std::string info = spec ? tool_schema(*spec).dump() : tools_listing(tools);
    ChatRequest req;
    req.seed = seed;
    req.temperature = 0.0;
    req.messages.push_back({Role::User, prompts::tool_simulator(info, calls_json({call}).dump()), {}, {}});
    for (int attempt = 0; attempt <= retries; ++attempt) {
        ChatReply reply = gw.chat(req);
        if (auto body = parse_func_return(reply.content)) {
            Message m;
            m.role = Role::Tool;
            m.tool_name = call.name;
            m.tool_result = std::move(*body);
            return m;
        }
        req.messages.push_back({Role::Assistant, reply.content, {}, {}});
        req.messages.push_back(
            {Role::User, prompts::format_reminder("the JSON result enclosed in one <func_return></func_return> pair"), {}, {}});
    }
    throw ToolFormatError("tool simulator gave no valid <func_return> for " + call.name);
}

// ---- simulation -------------------------------------------------------------------

Trajectory run_simulation(const Agents& agents, const UserIntent& intent, const std::vector<FunctionSpec>& tools,
                          const SimLimits& limits, std::uint64_t seed, std::string trajectory_id) {
    limits.validate();
    if (tools.empty()) throw Error("run_simulation needs at least one tool");
    const bool native = agents.assistant.config().native_tools;

    Trajectory t;
    t.id = std::move(trajectory_id);
    t.intent = intent;
    t.seed = seed;
    t.tool_mode = native ? "native" : "inline";
    for (const auto& spec : tools) t.tools.push_back(tool_schema(spec));

    auto abort = [&](std::string reason) {
        t.outcome = {OutcomeKind::Aborted, std::move(reason)};
        return t;
    };

    try {
        for (int turn = 0; turn < limits.max_user_turns; ++turn) {
            ChatReply said = agents.user.chat(user_agent_request(intent, t.messages, seed, limits));
            if (said.content.find(prompts::kStopMarker) != std::string::npos) {
                if (turn == 0) return abort("first-turn-stop");
                t.outcome = {OutcomeKind::Stopped, {}};
                return t;
            }
            const std::string query = trim(said.content);
            if (query.empty()) return abort("empty-user-turn");
            t.messages.push_back({Role::User, {}, query, {}, nullptr, {}});

            int tool_steps = 0;
            for (;;) {
                std::optional<Message> reply;
                for (int attempt = 0; attempt <= limits.assistant_retries && !reply; ++attempt) {
                    try {
                        reply = parse_assistant_message(
                            agents.assistant.chat(assistant_request(tools, native, t.messages, seed, limits)));
                    } catch (const MalformedToolCall&) {
                    }
                }
                if (!reply) return abort("malformed-tool-call");
                if (reply->tool_calls.empty()) {
                    t.messages.push_back(std::move(*reply));
                    break;
                }
                tool_steps += static_cast<int>(reply->tool_calls.size());
                if (tool_steps > limits.max_consecutive_tool_steps) return abort("loop");

                // The call and its results are committed together so an
                // aborted trajectory never stores a dangling call.
                std::vector<Message> step{*reply};
                for (const auto& call : reply->tool_calls) {
                    auto it = std::find_if(tools.begin(), tools.end(), [&](const auto& s) { return s.name == call.name; });
                    try {
                        step.push_back(simulate_tool(agents.tool, it == tools.end() ? nullptr : &*it, tools, call, seed,
                                                     limits.tool_retries));
                    } catch (const ToolFormatError&) {
                        return abort("tool-format");
                    }
                }
                for (auto& m : step) t.messages.push_back(std::move(m));
            }
        }
    } catch (const Error& e) {
        return abort(std::string("gateway: ") + e.what());
    }
    t.outcome = {OutcomeKind::TurnLimit, {}};
    return t;
}

// ---- rendering & files ---------------------------------------------------------------

std::string render_assistant(const Message& m) {
    std::string out;
    if (!m.think.empty()) out += "<think>" + m.think + "</think>\n";
    out += m.content;
    for (const auto& c : m.tool_calls) {
        if (!out.empty() && out.back() != '\n') out += '\n';
        out += "<tool_call>\n" + json{{"name", c.name}, {"arguments", c.arguments}}.dump() + "\n</tool_call>";
    }
    return out;
}

std::string render_transcript(const std::vector<Message>& messages, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end && i < messages.size(); ++i) {
        const auto& m = messages[i];
        if (!out.empty()) out += "\n\n";
        out += role_name(m.role);
        out += ": ";
        if (m.role == Role::Assistant) out += render_assistant(m);
        else if (m.role == Role::Tool) out += m.tool_result.dump();
        else out += m.content;
    }
    return out;
}

std::string outcome_name(OutcomeKind kind) {
    switch (kind) {
    case OutcomeKind::Stopped: return "stopped";
    case OutcomeKind::TurnLimit: return "turn_limit";
    case OutcomeKind::Aborted: return "aborted";
    }
    return "aborted";
}

json intent_to_json(const UserIntent& i) {
    json j = {{"chain_id", i.chain_id}, {"task_instruction", i.task_instruction}, {"tool_usage", i.tool_usage}};
    if (!i.domain_labels.empty()) j["domain_labels"] = i.domain_labels;
    return j;
}

UserIntent intent_from_json(const json& j) {
    UserIntent i;
    i.chain_id = j.at("chain_id").get<std::string>();
    i.task_instruction = j.at("task_instruction").get<std::string>();
    i.tool_usage = j.value("tool_usage", json(nullptr));
    if (j.contains("domain_labels")) i.domain_labels = j["domain_labels"].get<std::vector<std::string>>();
    return i;
}

json message_to_json(const Message& m) {
    switch (m.role) {
    case Role::Assistant:
        return {{"role", "assistant"}, {"think", m.think}, {"content", m.content}, {"tool_calls", calls_json(m.tool_calls)}};
    case Role::Tool:
        return {{"role", "tool"}, {"name", m.tool_name}, {"tool_result", m.tool_result}};
    default:
        return {{"role", role_name(m.role)}, {"content", m.content}};
    }
}

Message message_from_json(const json& j) {
    Message m;
    m.role = role_from_name(j.at("role").get<std::string>());
    m.content = j.value("content", "");
    m.think = j.value("think", "");
    if (j.contains("tool_calls")) {
        for (const auto& c : j["tool_calls"]) {
            m.tool_calls.push_back({"", c.at("name").get<std::string>(), c.value("arguments", json::object())});
        }
    }
    if (j.contains("tool_result")) m.tool_result = j["tool_result"];
    m.tool_name = j.value("name", "");
    return m;
}

json trajectory_to_json(const Trajectory& t) {
    json messages = json::array();
    for (const auto& m : t.messages) messages.push_back(message_to_json(m));
    json j = {{"id", t.id},
              {"intent", intent_to_json(t.intent)},
              {"tools", t.tools},
              {"tool_mode", t.tool_mode},
              {"messages", std::move(messages)},
              {"outcome", outcome_name(t.outcome.kind)},
              {"seed", t.seed}};
    if (t.outcome.kind == OutcomeKind::Aborted) j["abort_reason"] = t.outcome.reason;
    return j;
}

Trajectory trajectory_from_json(const json& j) {
    try {
        Trajectory t;
        t.id = j.at("id").get<std::string>();
        t.intent = intent_from_json(j.at("intent"));
        t.tools = j.value("tools", json::array()).get<std::vector<json>>();
        t.tool_mode = j.value("tool_mode", "inline");
        for (const auto& m : j.at("messages")) t.messages.push_back(message_from_json(m));
        const std::string outcome = j.at("outcome").get<std::string>();
        if (outcome == "stopped") t.outcome = {OutcomeKind::Stopped, {}};
        else if (outcome == "turn_limit") t.outcome = {OutcomeKind::TurnLimit, {}};
        else t.outcome = {OutcomeKind::Aborted, j.value("abort_reason", "")};
        t.seed = j.value("seed", std::uint64_t{0});
        return t;
    } catch (const json::exception& e) {
        throw ParseFailure(std::string("bad trajectory record: ") + e.what());
    }
}

} // namespace toolforge
