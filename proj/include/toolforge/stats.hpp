#pragma once

#include <map>
#include <string>
#include <vector>

#include "toolforge/gateway.hpp"
#include "toolforge/sampler.hpp"
#include "toolforge/synthesis.hpp"

namespace toolforge {

using Histogram = std::map<std::size_t, std::size_t>; // value -> count

std::size_t histogram_mass(const Histogram& h);

struct DomainShare {
    std::string label;
    std::size_t occurrences = 0;
    double percent = 0.0;
};

struct StatsReport {
    Histogram messages_per_trajectory;
    Histogram context_messages_per_sample;
    Histogram user_messages_per_trajectory;
    // One entry per user segment: the length of each maximal run of
    // tool-calling assistant steps, or 0 when the segment has none.
    Histogram tool_run_lengths;
    std::vector<DomainShare> domains; // sorted by occurrences, "others" last
};

// Run lengths of one trajectory, one value per maximal run, 0 for a user
// segment without tool calls.
std::vector<std::size_t> tool_runs(const std::vector<Message>& messages);

StatsReport compute_stats(const std::vector<Trajectory>& trajectories, const std::vector<TrainingSample>& samples);

struct DomainResult {
    std::vector<UserIntent> labeled;
    std::vector<DomainShare> distribution;
    std::size_t format_errors = 0;
};

// Labels each intent through the gateway. Replies must be a JSON object with
// exactly a non-empty "domains" string list; otherwise "unclassified".
DomainResult classify_domains(Gateway& gw, const std::vector<UserIntent>& intents, std::size_t workers = 1,
                              int retries = 1);

// Shares over label occurrences, with every label at or below
// `tail_percent` merged into "others".
std::vector<DomainShare> domain_distribution(const std::vector<UserIntent>& intents, double tail_percent = 2.0);

json stats_to_json(const StatsReport& r);
std::string histogram_csv(const Histogram& h, std::string_view value_column);
std::string domains_csv(const std::vector<DomainShare>& d);

} // namespace toolforge
