#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "toolforge/sampler.hpp"

using namespace toolforge;

namespace {

AnnotatedTrajectory annotate(Trajectory t, std::mt19937_64& rng, int keep_percent = 70) {
    AnnotatedTrajectory a;
    a.traj_verdict.trajectory_id = t.id;
    a.traj_verdict.bit = 1;
    for (std::size_t i = 0; i < t.messages.size(); ++i) {
        if (t.messages[i].role == Role::Assistant) a.turn_mask[i] = static_cast<int>(rng() % 100) < keep_percent;
    }
    a.trajectory = std::move(t);
    return a;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& trajectories) {
    std::ofstream out(p);
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        out << json{{"sample_id", trajectories[i] + "#" + std::to_string(i)}, {"source_trajectory", trajectories[i]}}.dump()
            << "\n";
    }
}

} // namespace

TEST_SUITE("sampler") {

TEST_CASE("one sample per kept assistant message") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        auto a = annotate(tftest::random_trajectory(rng, padded_id("traj-", trial)), rng);
        auto samples = split_trajectory(a);
        std::size_t kept = 0;
        for (const auto& [_, keep] : a.turn_mask) kept += keep;
        REQUIRE(samples.size() == kept);
        std::size_t prev = 0;
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const auto& s = samples[k];
            CHECK(a.turn_mask.at(s.anchor_index));
            CHECK(s.context.size() == s.anchor_index + 1);
            CHECK(s.context.back().role == Role::Assistant);
            CHECK(s.sample_id == a.trajectory.id + "#" + std::to_string(s.anchor_index));
            for (std::size_t i = 0; i <= s.anchor_index; ++i) CHECK(s.context[i] == a.trajectory.messages[i]);
            if (k > 0) CHECK(s.anchor_index > prev);
            prev = s.anchor_index;
        }
    }
}

TEST_CASE("masked turns stay in later contexts") {
    std::mt19937_64 rng(1);
    auto t = tftest::random_trajectory(rng, "traj-x");
    t.messages = {{Role::User, {}, "q", {}, nullptr, {}},
                  {Role::Assistant, {}, "bad", {}, nullptr, {}},
                  {Role::User, {}, "q2", {}, nullptr, {}},
                  {Role::Assistant, {}, "good", {}, nullptr, {}}};
    AnnotatedTrajectory a{t, {}, {{1, false}, {3, true}}};
    a.traj_verdict.bit = 1;
    auto samples = split_trajectory(a);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].anchor_index == 3);
    CHECK(samples[0].context[1].content == "bad");

    a.traj_verdict.bit = 0;
    CHECK(split_trajectory(a).empty());
}

TEST_CASE("serialization sorts and checks text") {
    std::mt19937_64 rng(3);
    std::vector<TrainingSample> all;
    for (int i : {3, 1, 2}) {
        auto s = split_trajectory(annotate(tftest::random_trajectory(rng, padded_id("traj-", i)), rng, 100));
        all.insert(all.end(), s.rbegin(), s.rend());
    }
    auto records = serialize_samples(all);
    REQUIRE(records.size() == all.size());
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto a = std::pair{records[i - 1]["source_trajectory"].get<std::string>(), records[i - 1]["anchor_index"].get<std::size_t>()};
        const auto b = std::pair{records[i]["source_trajectory"].get<std::string>(), records[i]["anchor_index"].get<std::size_t>()};
        CHECK(a < b);
    }
    CHECK(records[0]["loss"] == "anchor_only");
    auto back = sample_from_json(records[0]);
    CHECK(sample_to_json(back) == records[0]);

    all[0].context[0].content = "bad \xff byte";
    CHECK_THROWS_AS(serialize_samples(all), SerializationError);
    all[0].context[0].content = "caf\xc3\xa9";
    CHECK_NOTHROW(serialize_samples(all));
}

TEST_CASE("manifest counts lines and trajectories") {
    tftest::TempDir dir;
    write_lines(dir / "a.jsonl", {"t1", "t1", "t2"});
    write_lines(dir / "b.jsonl", {"u1"});
    std::ofstream(dir / "b.jsonl", std::ios::app) << "\n";
    auto m = build_manifest({{"alpha", dir / "a.jsonl", 3}, {"beta", dir / "b.jsonl", std::nullopt}});
    REQUIRE(m.rows.size() == 2);
    CHECK(m.rows[0] == ManifestRow{"alpha", 2, 3});
    CHECK(m.rows[1] == ManifestRow{"beta", 1, 1});
    CHECK(m.total_samples == 4);
    CHECK(m.total_trajectories == 3);
    auto j = manifest_to_json(m);
    CHECK(j["totals"]["samples"] == 4);
    CHECK(j["rows"][1]["source"] == "beta");

    CHECK_THROWS_AS(build_manifest({{"alpha", dir / "a.jsonl", 4}}), ManifestMismatch);
    CHECK_THROWS_AS(build_manifest({{"gone", dir / "missing.jsonl", std::nullopt}}), StageInputMissing);
}

}
