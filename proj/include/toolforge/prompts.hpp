#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace toolforge::prompts {

// Replaces each "{key}" in `tmpl` with its value. Unknown braces are left alone.
std::string render(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& vars);

std::string complete_input(std::string_view function_json);
std::string complete_output(std::string_view function_json);
std::string edge_validator(std::string_view source_function, std::string_view target_function);
std::string user_intent(std::string_view tools);
std::string user_simulator(std::string_view intent);
std::string tool_simulator(std::string_view function_info, std::string_view tool_calls);
std::string trajectory_judge(std::string_view tools, std::string_view messages);
std::string turn_judge(std::string_view tools, std::string_view history, std::string_view response);
std::string domain_classifier(std::string_view intent);
std::string assistant_system(std::string_view inline_tools);

// Sent as the opening user message to the user simulator.
inline constexpr std::string_view kUserSimulatorKickoff = "Start the conversation with your first message.";

// Re-prompt appended after a reply that failed the strict format check.
std::string format_reminder(std::string_view expected);

inline constexpr std::string_view kStopMarker = "###STOP###";

enum class Kind {
    CompleteInput,
    CompleteOutput,
    EdgeValidator,
    UserIntent,
    UserSimulator,
    ToolSimulator,
    TrajectoryJudge,
    TurnJudge,
    DomainClassifier,
    AssistantSystem,
    Unknown,
};

// Identifies which template produced `text` by its fixed opening sentence.
Kind classify(std::string_view text);

} // namespace toolforge::prompts
