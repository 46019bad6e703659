#include "toolforge/prompts.hpp"

namespace toolforge::prompts {

namespace {

constexpr std::string_view kCompleteInput = R"(Please help me predict the input of the function.

Return only one result in JSON format with two fields: input description and input structure.
Input description should describe the content of the input, while input structure should be a list of parameters, each with a name, a description and a type.

The function is: {function})";

constexpr std::string_view kCompleteOutput = R"(Please help me predict the output of this function.

Return only one result in JSON format with two fields: output description and output structure.
Output description should describe the content of the output, while output structure should be a list of parameters, each with a name, a description and a type.

The function is: {function})";

constexpr std::string_view kEdgeValidator = R"(Please determine whether the following "source_function" and "target_function" can be highly correlated or the output result of "source_function" is suitable as the input parameter of "target_function". If the correlation is large or suitable for parameter passing, the specific function is as follows:

### Source_function:

{source_function}

### Target_function:

{target_function}

Please evaluate the strength of the association edges and assign a score from 0 to 9 for the following aspects: field transitivity, coherence of potential user intent paths. The output should be a JSON object with exactly two fields: "Field transitivity", "Potential user intent path coherence". Do not output anything else!!!)";

constexpr std::string_view kUserIntent = R"(Suppose you have another assistant who has access to the following tools to get information. Please generate one task instruction that mimic real human users and their intentions, such as having different personalities and goals. Note that the intent should be as natural as possible, covering as many tools as possible, but not forcing overwriting if the tools are not closely related. Please ignore image-related tools and do not generate image-related instructions. User intents should be highly consistent, avoiding the awkward patchwork of several unrelated tasks.

### Tools

{tools}

Please output the results strictly in JSON format with two fields: "Task Instruction" and "Tool Usage" and don't output anything else!!)";

constexpr std::string_view kUserSimulator = R"(You are a human user and must act as a genuine user throughout the conversation, interacting in a manner consistent with normal human behavior.
Your primary goal is to achieve the following intent by seeking guidance, advice, or assistance from other participants.

### Your intent:

{intent}

Please adhere strictly to the following guidelines:

1. Role Consistency and Natural Interaction: Always maintain the role of a user. Do not respond as an assistant, AI, or any authoritative figure. Speak naturally, as a real human would. Avoid repetitive, mechanical, or overly structured responses.

2. Incremental Disclosure: Do not reveal your entire intent at once. Unfold your needs gradually over multiple turns. Use common human conversation strategies, such as showing uncertainty when appropriate.

3. Response to Fulfillment: If the the other participant successfully fulfills your intent, output '###STOP###' immediately. Do not output '###STOP###' in the first turn, regardless of the conversation!!)";

constexpr std::string_view kToolSimulator = R"(You are simulating a high-performance computer system with complete computational capabilities. You have access to extensive external knowledge, can execute any arbitrary function, and operate without errors. For a given function, you should simulate the execution of a computer system program as accurately as possible.

### Function info

{function_info}

### Function call

{tool_calls}

Given this function call, you should execute the function and return the results strictly in JSON format.
Your response should contain only the JSON result, without any additional or irrelevant text.
The result must be enclosed within <func_return> and </func_return> tags.
If the function call is invalid (e.g., incorrect function name, missing or malformed arguments), return a JSON error message clearly indicating the cause.

### Example of function call and function return:

[{ "name": "get_weather", "arguments": {"city": "New York"} }]

<func_return> { "temperature": "25°C" } </func_return>)";

constexpr std::string_view kTrajectoryJudge = R"(Please strictly evaluate the quality of the following multi-turn dialogue data based on the following criteria: contextual coherence, role consistency, logical soundness, and accuracy of tool usage.
Your task is to make a binary judgment: if the dialogue is of good quality, output 1; otherwise, output 0.

### Tools

{tools}

###Multi-turn conversations

{messages}

Please make a strict and comprehensive assessment of the dialogue’s quality, considering whether it maintains contextual coherence, consistent role behavior, logical reasoning, and correct use of tools.
Finally, output only a single digit: 0 or 1. Do not include any other text or explanation.)";

constexpr std::string_view kTurnJudge = R"(Please strictly evaluate the quality of the last response in the following dialogue data, based on contextual coherence, logical consistency, and accuracy of tool usage.
Determine whether the response is semantically aligned with the previous dialogue, logically sound without contradictions, and employs the mentioned tools correctly according to their definitions and argument structures.
If the response is of good quality, output 1; otherwise, output 0.

### Tools mentioned in the conversation

{tools}

### Conversation history

{messages}

### Last response

{response}

Please make a strict judgment on whether the last response is of good or poor quality, considering contextual coherence, logical soundness, and correctness of tool usage.
Finally, output only a single digit: 0 or 1. Do not output any other text or explanation.)";

constexpr std::string_view kDomainClassifier = R"(Classify the application domain of the following user intent for a tool-use assistant.
A single intent may belong to several domains. Use short lowercase labels such as "data analysis", "entertainment", "finance", "e-commerce", "travel", "health", "education", "security", "weather", "communication", "productivity", "sports" or "other".

### User intent

{intent}

Output only a JSON object with exactly one field "domains" whose value is a non-empty list of labels. Do not output anything else.)";

constexpr std::string_view kAssistantSystem = R"(You are a helpful assistant that can call external tools to help the user.
Think step by step inside <think></think> before answering. To call a tool, emit one <tool_call></tool_call> block per call containing a JSON object with "name" and "arguments". Otherwise reply to the user directly.{tools_section})";

struct Marker {
    std::string_view prefix;
    Kind kind;
};

constexpr Marker kMarkers[] = {
    {"Please help me predict the input of the function.", Kind::CompleteInput},
    {"Please help me predict the output of this function.", Kind::CompleteOutput},
    {"Please determine whether the following \"source_function\"", Kind::EdgeValidator},
    {"Suppose you have another assistant who has access to the following tools", Kind::UserIntent},
    {"You are a human user and must act as a genuine user", Kind::UserSimulator},
    {"You are simulating a high-performance computer system", Kind::ToolSimulator},
    {"Please strictly evaluate the quality of the following multi-turn dialogue", Kind::TrajectoryJudge},
    {"Please strictly evaluate the quality of the last response", Kind::TurnJudge},
    {"Classify the application domain of the following user intent", Kind::DomainClassifier},
    {"You are a helpful assistant that can call external tools", Kind::AssistantSystem},
};

} // namespace

std::string render(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& vars) {
    std::string out;
    out.reserve(tmpl.size() + 256);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            bool replaced = false;
            for (const auto& [key, value] : vars) {
                if (tmpl.substr(i + 1, key.size()) == key && i + 1 + key.size() < tmpl.size() &&
                    tmpl[i + 1 + key.size()] == '}') {
                    out += value;
                    i += key.size() + 2;
                    replaced = true;
                    break;
                }
            }
            if (replaced) continue;
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::string complete_input(std::string_view function_json) {
    return render(kCompleteInput, {{"function", std::string(function_json)}});
}

std::string complete_output(std::string_view function_json) {
    return render(kCompleteOutput, {{"function", std::string(function_json)}});
}

std::string edge_validator(std::string_view source_function, std::string_view target_function) {
    return render(kEdgeValidator, {{"source_function", std::string(source_function)},
                                   {"target_function", std::string(target_function)}});
}

std::string user_intent(std::string_view tools) {
    return render(kUserIntent, {{"tools", std::string(tools)}});
}

std::string user_simulator(std::string_view intent) {
    return render(kUserSimulator, {{"intent", std::string(intent)}});
}

std::string tool_simulator(std::string_view function_info, std::string_view tool_calls) {
    return render(kToolSimulator, {{"function_info", std::string(function_info)},
                                   {"tool_calls", std::string(tool_calls)}});
}

std::string trajectory_judge(std::string_view tools, std::string_view messages) {
    return render(kTrajectoryJudge, {{"tools", std::string(tools)}, {"messages", std::string(messages)}});
}

std::string turn_judge(std::string_view tools, std::string_view history, std::string_view response) {
    return render(kTurnJudge, {{"tools", std::string(tools)},
                               {"messages", std::string(history)},
                               {"response", std::string(response)}});
}

std::string domain_classifier(std::string_view intent) {
    return render(kDomainClassifier, {{"intent", std::string(intent)}});
}

std::string assistant_system(std::string_view inline_tools) {
    std::string section;
    if (!inline_tools.empty()) {
        section = "\n\n### Available tools\n\n";
        section += inline_tools;
    }
    return render(kAssistantSystem, {{"tools_section", section}});
}

std::string format_reminder(std::string_view expected) {
    std::string out = "Your previous reply did not follow the required format. Reply again with ";
    out += expected;
    out += " and nothing else.";
    return out;
}

Kind classify(std::string_view text) {
    auto pos = text.find_first_not_of(" \t\r\n");
    if (pos == std::string_view::npos) return Kind::Unknown;
    text.remove_prefix(pos);
    for (const auto& m : kMarkers) {
        if (text.substr(0, m.prefix.size()) == m.prefix) return m.kind;
    }
    return Kind::Unknown;
}

} // namespace toolforge::prompts
