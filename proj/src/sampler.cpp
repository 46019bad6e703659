#include "toolforge/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "toolforge/error.hpp"

namespace toolforge {

namespace {

void check_utf8(const json& j, const std::string& where) {
    switch (j.type()) {
    case json::value_t::string:
        if (!is_valid_utf8(j.get_ref<const std::string&>())) throw SerializationError("non-UTF-8 text in " + where);
        break;
    case json::value_t::object:
        for (const auto& [key, value] : j.items()) {
            if (!is_valid_utf8(key)) throw SerializationError("non-UTF-8 key in " + where);
            check_utf8(value, where);
        }
        break;
    case json::value_t::array:
        for (const auto& v : j) check_utf8(v, where);
        break;
    default:
        break;
    }
}

} // namespace

std::vector<TrainingSample> split_trajectory(const AnnotatedTrajectory& annotated) {
    const auto& t = annotated.trajectory;
    std::vector<TrainingSample> out;
    if (annotated.traj_verdict.bit != 1) return out;
    for (const auto& [index, keep] : annotated.turn_mask) {
        if (!keep) continue;
        if (index >= t.messages.size() || t.messages[index].role != Role::Assistant) continue;
        TrainingSample s;
        s.source_trajectory = t.id;
        s.anchor_index = index;
        s.sample_id = t.id + "#" + std::to_string(index);
        s.context.assign(t.messages.begin(), t.messages.begin() + static_cast<std::ptrdiff_t>(index) + 1);
        s.tools = t.tools;
        out.push_back(std::move(s));
    }
    return out;
}

json sample_to_json(const TrainingSample& s) {
    json messages = json::array();
    for (const auto& m : s.context) messages.push_back(message_to_json(m));
    return {{"sample_id", s.sample_id},
            {"source_trajectory", s.source_trajectory},
            {"messages", std::move(messages)},
            {"tools", s.tools},
            {"anchor_index", s.anchor_index},
            {"loss", "anchor_only"}};
}

TrainingSample sample_from_json(const json& j) {
    TrainingSample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.source_trajectory = j.at("source_trajectory").get<std::string>();
    s.anchor_index = j.at("anchor_index").get<std::size_t>();
    for (const auto& m : j.at("messages")) s.context.push_back(message_from_json(m));
    s.tools = j.value("tools", json::array()).get<std::vector<json>>();
    return s;
}

std::vector<json> serialize_samples(std::vector<TrainingSample> samples) {
    std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
        return a.source_trajectory != b.source_trajectory ? a.source_trajectory < b.source_trajectory
                                                          : a.anchor_index < b.anchor_index;
    });
    std::vector<json> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        json record = sample_to_json(s);
        check_utf8(record, s.sample_id);
        out.push_back(std::move(record));
    }
    return out;
}

DatasetManifest build_manifest(const std::vector<SampleFile>& files) {
    DatasetManifest m;
    for (const auto& f : files) {
        std::ifstream in(f.path);
        if (!in) throw StageInputMissing("cannot read sample file " + f.path.string());
        ManifestRow row{f.source, 0, 0};
        std::unordered_set<std::string> trajectories;
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            ++row.samples;
            auto rec = json::parse(line, nullptr, false);
            if (!rec.is_discarded() && rec.is_object() && rec.contains("source_trajectory") &&
                rec["source_trajectory"].is_string()) {
                trajectories.insert(rec["source_trajectory"].get<std::string>());
            }
        }
        row.trajectories = trajectories.size();
        if (f.declared_samples && *f.declared_samples != row.samples) {
            throw ManifestMismatch(f.path.string() + " declares " + std::to_string(*f.declared_samples) +
                                   " samples but has " + std::to_string(row.samples) + " lines");
        }
        m.total_samples += row.samples;
        m.total_trajectories += row.trajectories;
        m.rows.push_back(std::move(row));
    }
    return m;
}

json manifest_to_json(const DatasetManifest& m) {
    json rows = json::array();
    for (const auto& r : m.rows) {
        rows.push_back({{"source", r.source}, {"trajectories", r.trajectories}, {"samples", r.samples}});
    }
    return {{"rows", std::move(rows)},
            {"totals", {{"trajectories", m.total_trajectories}, {"samples", m.total_samples}}}};
}

} // namespace toolforge
