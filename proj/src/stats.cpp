#include "toolforge/stats.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>

#include "toolforge/prompts.hpp"

namespace toolforge {

namespace {

std::optional<std::vector<std::string>> parse_domain_reply(std::string_view reply) {
    auto obj = extract_json_object(strip_code_fence(reply));
    if (!obj || obj->size() != 1 || !obj->contains("domains")) return std::nullopt;
    const json& d = (*obj)["domains"];
    if (!d.is_array() || d.empty()) return std::nullopt;
    std::vector<std::string> labels;
    for (const auto& v : d) {
        if (!v.is_string()) return std::nullopt;
        std::string label = normalize_whitespace(v.get<std::string>());
        std::transform(label.begin(), label.end(), label.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (label.empty()) return std::nullopt;
        if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(std::move(label));
    }
    return labels;
}

} // namespace

std::size_t histogram_mass(const Histogram& h) {
    return std::accumulate(h.begin(), h.end(), std::size_t{0}, [](std::size_t acc, const auto& kv) { return acc + kv.second; });
}

std::vector<std::size_t> tool_runs(const std::vector<Message>& messages) {
    std::vector<std::size_t> runs;
    bool in_segment = false;
    bool segment_had_run = false;
    std::size_t run = 0;
    auto close_run = [&] {
        if (run > 0) {
            runs.push_back(run);
            segment_had_run = true;
            run = 0;
        }
    };
    auto close_segment = [&] {
        close_run();
        if (in_segment && !segment_had_run) runs.push_back(0);
        segment_had_run = false;
    };
    for (const auto& m : messages) {
        switch (m.role) {
        case Role::User:
            close_segment();
            in_segment = true;
            break;
        case Role::Assistant:
            if (!m.tool_calls.empty()) {
                ++run;
            } else {
                close_run();
            }
            break;
        case Role::Tool:
        case Role::System:
            break;
        }
    }
    close_segment();
    return runs;
}

StatsReport compute_stats(const std::vector<Trajectory>& trajectories, const std::vector<TrainingSample>& samples) {
    StatsReport r;
    for (const auto& t : trajectories) {
        ++r.messages_per_trajectory[t.messages.size()];
        std::size_t users = 0;
        for (const auto& m : t.messages) users += m.role == Role::User ? 1 : 0;
        ++r.user_messages_per_trajectory[users];
        for (auto run : tool_runs(t.messages)) ++r.tool_run_lengths[run];
    }
    for (const auto& s : samples) ++r.context_messages_per_sample[s.context.size()];
    std::vector<UserIntent> intents;
    for (const auto& t : trajectories) {
        if (!t.intent.domain_labels.empty()) intents.push_back(t.intent);
    }
    r.domains = domain_distribution(intents);
    return r;
}

std::vector<DomainShare> domain_distribution(const std::vector<UserIntent>& intents, double tail_percent) {
    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& i : intents) {
        for (const auto& label : i.domain_labels) {
            ++counts[label];
            ++total;
        }
    }
    std::vector<DomainShare> out;
    if (total == 0) return out;
    DomainShare others{"others", 0, 0.0};
    for (const auto& [label, n] : counts) {
        const double pct = 100.0 * static_cast<double>(n) / static_cast<double>(total);
        if (pct <= tail_percent || label == "others") {
            others.occurrences += n;
        } else {
            out.push_back({label, n, pct});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.occurrences > b.occurrences; });
    if (others.occurrences > 0) {
        others.percent = 100.0 * static_cast<double>(others.occurrences) / static_cast<double>(total);
        out.push_back(others);
    }
    return out;
}

DomainResult classify_domains(Gateway& gw, const std::vector<UserIntent>& intents, std::size_t workers, int retries) {
    DomainResult result;
    result.labeled = intents;
    std::vector<char> failed(intents.size(), 0);
    parallel_for(intents.size(), workers, [&](std::size_t i) {
        ChatRequest req;
        req.temperature = 0.0;
        req.messages.push_back({Role::User, prompts::domain_classifier(intents[i].task_instruction), {}, {}});
        for (int attempt = 0; attempt <= retries; ++attempt) {
            ChatReply reply = gw.chat(req);
            if (auto labels = parse_domain_reply(reply.content)) {
                result.labeled[i].domain_labels = std::move(*labels);
                return;
            }
            req.messages.push_back({Role::Assistant, reply.content, {}, {}});
            req.messages.push_back({Role::User, prompts::format_reminder(R"(a JSON object {"domains": [...]})"), {}, {}});
        }
        result.labeled[i].domain_labels = {"unclassified"};
        failed[i] = 1;
    });
    result.format_errors = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
    result.distribution = domain_distribution(result.labeled);
    return result;
}

json stats_to_json(const StatsReport& r) {
    auto hist = [](const Histogram& h) {
        json buckets = json::array();
        for (const auto& [value, count] : h) buckets.push_back({value, count});
        return json{{"buckets", std::move(buckets)}, {"mass", histogram_mass(h)}};
    };
    json domains = json::array();
    for (const auto& d : r.domains) {
        domains.push_back({{"label", d.label}, {"occurrences", d.occurrences}, {"percent", d.percent}});
    }
    return {{"messages_per_trajectory", hist(r.messages_per_trajectory)},
            {"context_messages_per_sample", hist(r.context_messages_per_sample)},
            {"user_messages_per_trajectory", hist(r.user_messages_per_trajectory)},
            {"tool_run_lengths", hist(r.tool_run_lengths)},
            {"domains", std::move(domains)}};
}

std::string histogram_csv(const Histogram& h, std::string_view value_column) {
    std::string out(value_column);
    out += ",count\n";
    for (const auto& [value, count] : h) out += std::to_string(value) + "," + std::to_string(count) + "\n";
    return out;
}

std::string domains_csv(const std::vector<DomainShare>& d) {
    std::string out = "label,occurrences,percent\n";
    char buf[32];
    for (const auto& s : d) {
        std::snprintf(buf, sizeof buf, "%.4f", s.percent);
        std::string label = s.label;
        if (label.find_first_of(",\"") != std::string::npos) {
            std::string quoted = "\"";
            for (char c : label) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
            label = quoted + "\"";
        }
        out += label + "," + std::to_string(s.occurrences) + "," + buf + "\n";
    }
    return out;
}

} // namespace toolforge
