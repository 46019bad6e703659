#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/fn_graph.hpp"
#include "toolforge/gateway.hpp"
#include "toolforge/spec_model.hpp"

namespace toolforge {

struct UserIntent {
    std::string chain_id;
    std::string task_instruction;
    json tool_usage; // string or list, as the model produced it
    std::vector<std::string> domain_labels;
};

// One stored conversation message. Assistant messages keep think, content
// and tool_calls apart; tool messages carry the simulator's JSON result.
struct Message {
    Role role = Role::User;
    std::string think;
    std::string content;
    std::vector<ToolCall> tool_calls;
    json tool_result = nullptr;
    std::string tool_name;

    bool operator==(const Message&) const = default;
};

enum class OutcomeKind { Stopped, TurnLimit, Aborted };

struct Outcome {
    OutcomeKind kind = OutcomeKind::Aborted;
    std::string reason; // aborted only: first-turn-stop, loop, malformed-tool-call, tool-format, gateway: ...
};

struct Trajectory {
    std::string id;
    UserIntent intent;
    std::vector<json> tools; // tool_schema projections of the chain's functions
    std::string tool_mode = "inline"; // how the assistant saw the tools: native | inline
    std::vector<Message> messages;
    Outcome outcome;
    std::uint64_t seed = 0;
};

struct SimLimits {
    int max_user_turns = 12;
    // Tool calls executed since the last user message. Exceeding it aborts
    // the trajectory as a loop.
    int max_consecutive_tool_steps = 8;
    int max_message_tokens = 2048;
    int assistant_retries = 1;
    int tool_retries = 1;

    void validate() const; // throws ConfigError
};

json to_json(const SimLimits& limits);
SimLimits sim_limits_from_json(const json& j, SimLimits base = {});

// ---- intents ---------------------------------------------------------------

// Strict two-field reply: "Task Instruction" (non-empty text) and "Tool Usage".
std::optional<UserIntent> parse_intent_reply(std::string_view reply, const std::string& chain_id);

// Throws IntentFormatError when no valid reply arrives within `retries` re-prompts.
UserIntent synthesize_intent(Gateway& gw, const FunctionChain& chain,
                             const std::map<std::string, FunctionSpec>& corpus, int retries = 1);

// ---- message formats -------------------------------------------------------

// Splits assistant text into <think>, <tool_call> JSON blocks and the
// remaining content. Native tool calls on the reply take precedence over
// tags. Throws MalformedToolCall on unparseable call JSON or an empty turn.
Message parse_assistant_message(const ChatReply& reply);
Message parse_assistant_message(std::string_view text);

// Interior JSON of the single <func_return>...</func_return> region.
std::optional<json> parse_func_return(std::string_view reply);

// One simulator call per tool call. `spec` is null for unknown function
// names; the simulator is then shown the whole tool list and is expected
// to answer with a JSON error object, which is kept as a normal result.
// Throws ToolFormatError after `retries` re-prompts without a valid region.
Message simulate_tool(Gateway& gw, const FunctionSpec* spec, const std::vector<FunctionSpec>& tools,
                      const ToolCall& call, std::uint64_t seed, int retries = 1);

// ---- simulation ------------------------------------------------------------

struct Agents {
    Gateway& user;
    Gateway& assistant;
    Gateway& tool;
};

Trajectory run_simulation(const Agents& agents, const UserIntent& intent, const std::vector<FunctionSpec>& tools,
                          const SimLimits& limits, std::uint64_t seed, std::string trajectory_id);

// ---- rendering & files -------------------------------------------------------

// "<think>..</think>content<tool_call>{..}</tool_call>": the text form judges read.
std::string render_assistant(const Message& m);
// "role: text" lines for a message range, as shown to judges.
std::string render_transcript(const std::vector<Message>& messages, std::size_t begin, std::size_t end);

std::string outcome_name(OutcomeKind kind);

json intent_to_json(const UserIntent& intent);
UserIntent intent_from_json(const json& j);
json message_to_json(const Message& m);
Message message_from_json(const json& j);
json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const json& j);

} // namespace toolforge
