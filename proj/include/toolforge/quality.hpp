#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/gateway.hpp"
#include "toolforge/synthesis.hpp"

namespace toolforge {

struct Verdict {
    std::string trajectory_id;
    std::optional<std::size_t> turn_index; // set for turn-level verdicts
    int bit = 0;
    std::string raw_reply;
    std::string judge_model;
    bool format_error = false; // VerdictFormatError after retries
    bool auto_rejected = false; // decided without a judge call
    int attempts = 0;           // judge calls spent on this verdict
};

// assistant message index -> keep
using TurnMask = std::map<std::size_t, bool>;

struct AnnotatedTrajectory {
    Trajectory trajectory;
    Verdict traj_verdict;
    TurnMask turn_mask;
};

struct FilterReport {
    std::size_t input = 0;
    std::size_t auto_rejected_non_stopped = 0;
    std::size_t judge_rejected = 0;
    std::size_t surviving = 0;
    std::size_t turns_total = 0;
    std::size_t turns_masked = 0;
    std::size_t judge_calls = 0;

    bool operator==(const FilterReport&) const = default;
};

// The trimmed reply must be exactly "0" or "1".
std::optional<int> parse_verdict(std::string_view reply);

struct JudgeOptions {
    int retries = 1;
    std::size_t workers = 1;
};

// Trajectories that did not end with the user's stop signal are rejected
// without a judge call.
Verdict gate_trajectory(Gateway& gw, const Trajectory& t, const JudgeOptions& opts = {});

// One judge call per assistant message, each seeing only the messages
// before it. Format errors mask the turn out.
TurnMask gate_turns(Gateway& gw, const Trajectory& t, const JudgeOptions& opts = {},
                    std::vector<Verdict>* verdicts = nullptr);

struct QualityResult {
    std::vector<AnnotatedTrajectory> survivors;
    std::vector<Verdict> verdicts; // every verdict, trajectory gate first, in pool order
    FilterReport report;
};

QualityResult apply_quality(const std::vector<Trajectory>& pool, Gateway& gw, const JudgeOptions& opts = {});

json verdict_to_json(const Verdict& v);
json annotated_to_json(const AnnotatedTrajectory& a);
json report_to_json(const FilterReport& r);
FilterReport report_from_json(const json& j);

// Rebuilds survivors from annotated.jsonl records and the trajectory pool.
std::vector<AnnotatedTrajectory> annotated_from_records(const std::vector<json>& records,
                                                        const std::vector<Trajectory>& pool);

} // namespace toolforge
