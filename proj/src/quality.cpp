#include "toolforge/quality.hpp"

#include <unordered_map>

#include "toolforge/error.hpp"
#include "toolforge/prompts.hpp"

namespace toolforge {

namespace {

Verdict ask_judge(Gateway& gw, const std::string& prompt, const std::string& trajectory_id,
                  std::optional<std::size_t> turn, int retries) {
    Verdict v;
    v.trajectory_id = trajectory_id;
    v.turn_index = turn;
    v.judge_model = gw.config().model;
    ChatRequest req;
    req.temperature = 0.0;
    req.messages.push_back({Role::User, prompt, {}, {}});
    for (int attempt = 0; attempt <= retries; ++attempt) {
        ++v.attempts;
        ChatReply reply = gw.chat(req);
        v.raw_reply = reply.content;
        if (auto bit = parse_verdict(reply.content)) {
            v.bit = *bit;
            return v;
        }
        req.messages.push_back({Role::Assistant, reply.content, {}, {}});
        req.messages.push_back({Role::User, prompts::format_reminder("a single digit, 0 or 1"), {}, {}});
    }
    v.bit = 0;
    v.format_error = true;
    return v;
}

std::string tools_text(const Trajectory& t) {
    return json(t.tools).dump();
}

} // namespace

std::optional<int> parse_verdict(std::string_view reply) {
    const std::string t = trim(reply);
    if (t == "0") return 0;
    if (t == "1") return 1;
    return std::nullopt;
}

Verdict gate_trajectory(Gateway& gw, const Trajectory& t, const JudgeOptions& opts) {
    if (t.outcome.kind != OutcomeKind::Stopped) {
        Verdict v;
        v.trajectory_id = t.id;
        v.judge_model = gw.config().model;
        v.auto_rejected = true;
        return v;
    }
    const std::string prompt = prompts::trajectory_judge(tools_text(t), render_transcript(t.messages, 0, t.messages.size()));
    return ask_judge(gw, prompt, t.id, std::nullopt, opts.retries);
}

TurnMask gate_turns(Gateway& gw, const Trajectory& t, const JudgeOptions& opts, std::vector<Verdict>* verdicts) {
    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < t.messages.size(); ++i) {
        if (t.messages[i].role == Role::Assistant) anchors.push_back(i);
    }
    std::vector<Verdict> out(anchors.size());
    const std::string tools = tools_text(t);
    parallel_for(anchors.size(), opts.workers, [&](std::size_t k) {
        const std::size_t i = anchors[k];
        const std::string prompt =
            prompts::turn_judge(tools, render_transcript(t.messages, 0, i), render_assistant(t.messages[i]));
        out[k] = ask_judge(gw, prompt, t.id, i, opts.retries);
    });
    TurnMask mask;
    for (std::size_t k = 0; k < anchors.size(); ++k) mask[anchors[k]] = out[k].bit == 1;
    if (verdicts) verdicts->insert(verdicts->end(), out.begin(), out.end());
    return mask;
}

QualityResult apply_quality(const std::vector<Trajectory>& pool, Gateway& gw, const JudgeOptions& opts) {
    struct Slot {
        Verdict gate;
        TurnMask mask;
        std::vector<Verdict> turn_verdicts;
    };
    std::vector<Slot> slots(pool.size());
    JudgeOptions inner = opts;
    inner.workers = 1;
    parallel_for(pool.size(), opts.workers, [&](std::size_t i) {
        slots[i].gate = gate_trajectory(gw, pool[i], inner);
        if (slots[i].gate.bit == 1) slots[i].mask = gate_turns(gw, pool[i], inner, &slots[i].turn_verdicts);
    });

    QualityResult result;
    auto& r = result.report;
    r.input = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto& slot = slots[i];
        r.judge_calls += static_cast<std::size_t>(slot.gate.attempts);
        result.verdicts.push_back(slot.gate);
        if (slot.gate.auto_rejected) {
            ++r.auto_rejected_non_stopped;
            continue;
        }
        if (slot.gate.bit == 0) {
            ++r.judge_rejected;
            continue;
        }
        ++r.surviving;
        for (const auto& v : slot.turn_verdicts) {
            r.judge_calls += static_cast<std::size_t>(v.attempts);
            result.verdicts.push_back(v);
        }
        r.turns_total += slot.mask.size();
        for (const auto& [_, keep] : slot.mask) r.turns_masked += keep ? 0 : 1;
        result.survivors.push_back({pool[i], std::move(slot.gate), std::move(slot.mask)});
    }
    return result;
}

json verdict_to_json(const Verdict& v) {
    return {{"trajectory_id", v.trajectory_id},
            {"turn_index", v.turn_index ? json(*v.turn_index) : json(nullptr)},
            {"bit", v.bit},
            {"raw_reply", v.raw_reply},
            {"judge_model", v.judge_model},
            {"format_error", v.format_error},
            {"auto_rejected", v.auto_rejected},
            {"attempts", v.attempts}};
}

json annotated_to_json(const AnnotatedTrajectory& a) {
    json mask = json::array();
    for (const auto& [index, keep] : a.turn_mask) mask.push_back({{"index", index}, {"keep", keep}});
    return {{"trajectory_id", a.trajectory.id}, {"verdict", a.traj_verdict.bit}, {"mask", std::move(mask)}};
}

json report_to_json(const FilterReport& r) {
    return {{"input", r.input},
            {"auto_rejected_non_stopped", r.auto_rejected_non_stopped},
            {"judge_rejected", r.judge_rejected},
            {"surviving", r.surviving},
            {"turns_total", r.turns_total},
            {"turns_masked", r.turns_masked},
            {"judge_calls", r.judge_calls}};
}

FilterReport report_from_json(const json& j) {
    FilterReport r;
    r.input = j.value("input", std::size_t{0});
    r.auto_rejected_non_stopped = j.value("auto_rejected_non_stopped", std::size_t{0});
    r.judge_rejected = j.value("judge_rejected", std::size_t{0});
    r.surviving = j.value("surviving", std::size_t{0});
    r.turns_total = j.value("turns_total", std::size_t{0});
    r.turns_masked = j.value("turns_masked", std::size_t{0});
    r.judge_calls = j.value("judge_calls", std::size_t{0});
    return r;
}

std::vector<AnnotatedTrajectory> annotated_from_records(const std::vector<json>& records,
                                                        const std::vector<Trajectory>& pool) {
    std::unordered_map<std::string, const Trajectory*> by_id;
    for (const auto& t : pool) by_id.emplace(t.id, &t);
    std::vector<AnnotatedTrajectory> out;
    for (const auto& r : records) {
        const std::string id = r.at("trajectory_id").get<std::string>();
        if (r.value("verdict", 0) != 1) continue;
        auto it = by_id.find(id);
        if (it == by_id.end()) throw StageInputMissing("annotated trajectory " + id + " missing from trajectories");
        AnnotatedTrajectory a;
        a.trajectory = *it->second;
        a.traj_verdict.trajectory_id = id;
        a.traj_verdict.bit = 1;
        for (const auto& m : r.at("mask")) {
            const auto index = m.at("index").get<std::size_t>();
            if (index >= a.trajectory.messages.size() || a.trajectory.messages[index].role != Role::Assistant) {
                throw ParseFailure("mask index " + std::to_string(index) + " of " + id + " is not an assistant message");
            }
            a.turn_mask[index] = m.at("keep").get<bool>();
        }
        out.push_back(std::move(a));
    }
    return out;
}

} // namespace toolforge
