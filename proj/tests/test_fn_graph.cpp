#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "support.hpp"
#include "toolforge/fn_graph.hpp"

using namespace toolforge;
using tftest::make_spec;

namespace {

void put(EmbeddingMap& m, const FunctionSpec& s, Direction d, const std::string& name, Embedding v) {
    ParameterKey key{s.id, d, name};
    m[key] = ParameterEmbedding{key, "t", std::move(v)};
}

// Specs with one input "in" and one output "out", each embedded as given.
struct Toy {
    std::vector<FunctionSpec> specs;
    EmbeddingMap emb;

    const FunctionSpec& add(const std::string& name, Embedding in, Embedding out) {
        specs.push_back(make_spec(name, {{"in", "in of " + name, "string"}}, {{"out", "out of " + name, "string"}}));
        put(emb, specs.back(), Direction::Input, "in", std::move(in));
        put(emb, specs.back(), Direction::Output, "out", std::move(out));
        return specs.back();
    }
    std::string id(std::size_t i) const { return specs[i].id; }
};

double oracle_cosine(const Embedding& a, const Embedding& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return kNoCandidate;
    return static_cast<double>(dot / std::sqrt(na * nb));
}

GraphConfig walk_config(int min_len, int max_len, int budget, std::uint64_t seed = 3) {
    GraphConfig c;
    c.walk_len_min = min_len;
    c.walk_len_max = max_len;
    c.node_visit_budget = budget;
    c.rng_seed = seed;
    return c;
}

FunctionGraph manual_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    FunctionGraph g;
    for (std::size_t i = 0; i < n; ++i) g.nodes.push_back(padded_id("n", i));
    for (auto [s, d] : edges) {
        Edge e;
        e.src = g.nodes[s];
        e.dst = g.nodes[d];
        e.score = 0.9;
        g.adjacency[e.src].push_back(e);
    }
    for (auto& [_, list] : g.adjacency) {
        std::sort(list.begin(), list.end(), [](const Edge& a, const Edge& b) { return a.dst < b.dst; });
    }
    return g;
}

} // namespace

TEST_SUITE("fn_graph") {

TEST_CASE("edge_score matches a brute-force cosine oracle") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    auto vec = [&](std::size_t dim) {
        Embedding v(dim);
        for (auto& x : v) x = nd(rng);
        return v;
    };
    for (int trial = 0; trial < 30; ++trial) {
        auto src = make_spec("s", {}, {{"o1", "a", "string"}, {"o2", "b", "int"}, {"o3", "c", "dict"}});
        auto dst = make_spec("d", {{"i1", "a", "string"}, {"i2", "b", "int"}}, {});
        EmbeddingMap emb;
        std::map<std::string, Embedding> outs, ins;
        for (const auto& p : src.outputs) put(emb, src, Direction::Output, p.name, outs[p.name] = vec(12));
        for (const auto& p : dst.inputs) put(emb, dst, Direction::Input, p.name, ins[p.name] = vec(12));

        double best = kNoCandidate;
        std::pair<std::string, std::string> pair;
        for (const auto& [o, ov] : outs) {
            for (const auto& [i, iv] : ins) {
                const double c = oracle_cosine(ov, iv);
                if (c > best) best = c, pair = {o, i};
            }
        }
        auto got = edge_score(src, dst, emb);
        CHECK(got.score == doctest::Approx(best).epsilon(1e-12));
        CHECK(got.best_output == pair.first);
        CHECK(got.best_input == pair.second);
        CHECK(got.score <= 1.0 + 1e-12);
        CHECK(got.score >= -1.0 - 1e-12);
    }
}

TEST_CASE("edge_score edge cases") {
    Toy t;
    t.add("a", {0, 1, 0}, {1, 0, 0});
    t.add("b", {1, 0, 0}, {0, 0, 1});
    CHECK(edge_score(t.specs[0], t.specs[1], t.emb).score == doctest::Approx(1.0));

    // unnormalized provider output is normalized here
    put(t.emb, t.specs[0], Direction::Output, "out", {7, 0, 0});
    CHECK(edge_score(t.specs[0], t.specs[1], t.emb).score == doctest::Approx(1.0));

    auto no_inputs = make_spec("c", {}, {{"out", "x", "string"}});
    put(t.emb, no_inputs, Direction::Output, "out", {1, 0, 0});
    CHECK(edge_score(t.specs[0], no_inputs, t.emb).score == kNoCandidate);

    put(t.emb, t.specs[1], Direction::Input, "in", {0, 0, 0});
    CHECK(edge_score(t.specs[0], t.specs[1], t.emb).score == kNoCandidate);

    EmbeddingMap empty;
    CHECK_THROWS_AS(edge_score(t.specs[0], t.specs[1], empty), MissingEmbedding);

    put(t.emb, t.specs[1], Direction::Input, "in", {1, 0});
    CHECK_THROWS_AS(edge_score(t.specs[0], t.specs[1], t.emb), DimensionMismatch);
}

TEST_CASE("validator reply parsing is strict") {
    const std::string ft = "\"Field transitivity\"";
    const std::string ic = "\"Potential user intent path coherence\"";
    auto ok = parse_validator_reply("{" + ft + ": 8, " + ic + ": 7}");
    REQUIRE(ok);
    CHECK(*ok == ValidatorScores{8, 7});
    CHECK(parse_validator_reply("{" + ft + ": 3, " + ic + ": 9}") == ValidatorScores{3, 9});

    CHECK_FALSE(parse_validator_reply("{" + ft + ": 8, " + ic + ": 7, \"Reason\": \"x\"}"));
    CHECK_FALSE(parse_validator_reply("{" + ft + ": 8}"));
    CHECK_FALSE(parse_validator_reply("{" + ft + ": 10, " + ic + ": 7}"));
    CHECK_FALSE(parse_validator_reply("{" + ft + ": -1, " + ic + ": 7}"));
    CHECK_FALSE(parse_validator_reply("{" + ft + ": 8.5, " + ic + ": 7}"));
    CHECK_FALSE(parse_validator_reply("{" + ft + ": \"8\", " + ic + ": 7}"));
    CHECK_FALSE(parse_validator_reply("Scores: {" + ft + ": 8, " + ic + ": 7}"));
    CHECK_FALSE(parse_validator_reply("8, 7"));
}

TEST_CASE("validate_edge accepts on the minimum and retries format errors") {
    auto a = make_spec("a", {}, {{"o", "O", "string"}});
    auto b = make_spec("b", {{"i", "I", "string"}}, {});
    const char* good = R"({"Field transitivity": 8, "Potential user intent path coherence": 7})";
    const char* low = R"({"Field transitivity": 3, "Potential user intent path coherence": 9})";
    const char* extra = R"({"Field transitivity": 8, "Potential user intent path coherence": 7, "Why": "x"})";

    auto run = [&](std::vector<std::string> replies, int retries) {
        auto backend = std::make_shared<tftest::ScriptedBackend>(std::move(replies));
        auto gw = tftest::make_gateway(backend);
        auto r = validate_edge(*gw, a, b, 6, retries);
        return std::pair{r, gw->stats().chat_calls};
    };
    auto [r1, c1] = run({good}, 1);
    CHECK(r1.accepted);
    CHECK(c1 == 1);
    auto [r2, c2] = run({low}, 1);
    CHECK_FALSE(r2.accepted);
    CHECK_FALSE(r2.format_error);
    auto [r3, c3] = run({extra, good}, 1);
    CHECK(r3.accepted);
    CHECK(c3 == 2);
    auto [r4, c4] = run({extra, "nope"}, 1);
    CHECK_FALSE(r4.accepted);
    CHECK(r4.format_error);
    CHECK(c4 == 2);
}

TEST_CASE("graph construction") {
    Toy t;
    // a.out matches b.in, b.out matches c.in; nothing else lines up.
    t.add("a", {0, 0, 0, 1}, {1, 0, 0, 0});
    t.add("b", {1, 0, 0, 0}, {0, 1, 0, 0});
    t.add("c", {0, 1, 0, 0}, {0, 0, 1, 0});
    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < t.specs.size(); ++i) by_name[t.specs[i].name] = i;
    auto id = [&](const char* n) { return t.id(by_name.at(n)); };

    SUBCASE("threshold and validator") {
        GraphConfig cfg;
        auto g = build_graph(t.specs, t.emb, always_accept_validator(), cfg);
        CHECK(g.nodes.size() == 3);
        CHECK(g.edge_count() == 2);
        CHECK(g.has_edge(id("a"), id("b")));
        CHECK(g.has_edge(id("b"), id("c")));
        CHECK_FALSE(g.has_edge(id("a"), id("c")));
        CHECK_FALSE(g.has_edge(id("b"), id("a")));
        CHECK(std::is_sorted(g.nodes.begin(), g.nodes.end()));

        int calls = 0;
        EdgeValidator reject = [&](const FunctionSpec&, const FunctionSpec&) {
            ++calls;
            return ValidatorResult{};
        };
        CHECK(build_graph(t.specs, t.emb, reject, cfg).edge_count() == 0);
        CHECK(calls == 2);
    }
    SUBCASE("tau near one leaves nothing above it") {
        put(t.emb, t.specs[by_name.at("b")], Direction::Input, "in", {0.98, 0.2, 0, 0});
        GraphConfig cfg;
        cfg.tau = 0.99;
        auto g = build_graph(t.specs, t.emb, always_accept_validator(), cfg);
        CHECK_FALSE(g.has_edge(id("a"), id("b")));
        CHECK(g.has_edge(id("b"), id("c")));
    }
    SUBCASE("full injection links every ordered pair without validation") {
        GraphConfig cfg;
        cfg.random_edge_rate = 1.0;
        int calls = 0;
        EdgeValidator counting = [&](const FunctionSpec&, const FunctionSpec&) {
            ++calls;
            return ValidatorResult{};
        };
        auto g = build_graph(t.specs, t.emb, counting, cfg);
        CHECK(g.edge_count() == 6);
        CHECK(calls == 0);
        for (const auto& [_, edges] : g.adjacency) {
            for (const auto& e : edges) {
                CHECK(e.injected);
                CHECK_FALSE(e.validator_scores);
            }
        }
    }
    SUBCASE("worker count does not change the graph") {
        GraphConfig cfg;
        cfg.random_edge_rate = 0.4;
        cfg.rng_seed = 17;
        auto g1 = build_graph(t.specs, t.emb, always_accept_validator(), cfg, {1});
        auto g4 = build_graph(t.specs, t.emb, always_accept_validator(), cfg, {4});
        CHECK(graph_records(g1) == graph_records(g4));
    }
}

TEST_CASE("injection draw depends only on seed and pair") {
    int hits = 0;
    for (int i = 0; i < 4000; ++i) {
        const auto s = "s" + std::to_string(i), d = "d" + std::to_string(i);
        CHECK(injection_draw(9, s, d, 0.25) == injection_draw(9, s, d, 0.25));
        hits += injection_draw(9, s, d, 0.25);
        CHECK_FALSE(injection_draw(9, s, d, 0.0));
        CHECK(injection_draw(9, s, d, 1.0));
    }
    CHECK(hits > 850);
    CHECK(hits < 1150);
}

TEST_CASE("random walks") {
    SUBCASE("six-cycle walks follow edges and respect lengths") {
        std::vector<std::pair<std::size_t, std::size_t>> ring;
        for (std::size_t i = 0; i < 6; ++i) ring.push_back({i, (i + 1) % 6});
        auto g = manual_graph(6, ring);
        auto cfg = walk_config(2, 4, 1000);
        auto res = sample_chains(g, cfg, 50);
        CHECK(res.chains.size() == 50);
        CHECK_FALSE(res.exhausted);
        std::set<std::string> ids;
        for (const auto& c : res.chains) {
            CHECK(c.length() >= 2);
            CHECK(c.length() <= 4);
            for (std::size_t k = 0; k + 1 < c.steps.size(); ++k) CHECK(g.has_edge(c.steps[k], c.steps[k + 1]));
            ids.insert(c.id);
        }
        CHECK(ids.size() == 50);
        CHECK(res.chains[0].id == "chain-00000");
    }
    SUBCASE("visit budget caps node appearances") {
        std::vector<std::pair<std::size_t, std::size_t>> star;
        for (std::size_t i = 1; i < 6; ++i) star.push_back({0, i}), star.push_back({i, 0});
        auto g = manual_graph(6, star);
        auto cfg = walk_config(1, 1, 1);
        auto res = sample_chains(g, cfg, 10);
        CHECK(res.exhausted);
        std::map<std::string, int> visits;
        for (const auto& c : res.chains) {
            for (const auto& s : c.steps) ++visits[s];
        }
        for (const auto& [_, v] : visits) CHECK(v <= 1);
        CHECK(res.chains.size() <= 3);
    }
    SUBCASE("budget property on a random graph") {
        std::mt19937_64 rng(8);
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t s = 0; s < 30; ++s) {
            for (std::size_t d = 0; d < 30; ++d) {
                if (s != d && rng() % 5 == 0) edges.push_back({s, d});
            }
        }
        auto g = manual_graph(30, edges);
        auto cfg = walk_config(3, 8, 7);
        auto res = sample_chains(g, cfg, 500);
        std::map<std::string, int> visits;
        for (const auto& c : res.chains) {
            for (const auto& s : c.steps) ++visits[s];
        }
        for (const auto& [_, v] : visits) CHECK(v <= 7);
    }
    SUBCASE("no edges") {
        auto g = manual_graph(4, {});
        CHECK_THROWS_AS(sample_chains(g, walk_config(1, 3, 5), 1), NoEdges);
    }
    SUBCASE("same seed, same chains; different seed, different chains") {
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t s = 0; s < 8; ++s) {
            for (std::size_t d = 0; d < 8; ++d) {
                if (s != d) edges.push_back({s, d});
            }
        }
        auto g = manual_graph(8, edges);
        auto steps = [&](std::uint64_t seed) {
            std::vector<std::vector<std::string>> out;
            for (const auto& c : sample_chains(g, walk_config(2, 6, 50, seed), 20).chains) out.push_back(c.steps);
            return out;
        };
        CHECK(steps(1) == steps(1));
        CHECK(steps(1) != steps(2));
    }
}

TEST_CASE("graph and chain records round trip") {
    Toy t;
    t.add("a", {0, 1}, {1, 0});
    t.add("b", {1, 0}, {0, 1});
    GraphConfig cfg;
    cfg.random_edge_rate = 0.5;
    cfg.rng_seed = 4;
    EdgeValidator scored = [](const FunctionSpec&, const FunctionSpec&) {
        ValidatorResult r;
        r.accepted = true;
        r.scores = ValidatorScores{8, 7};
        return r;
    };
    auto g = build_graph(t.specs, t.emb, scored, cfg);
    REQUIRE(g.edge_count() >= 1);
    auto back = graph_from_records(graph_meta(g), graph_records(g));
    CHECK(back.nodes == g.nodes);
    CHECK(back.adjacency == g.adjacency);
    CHECK(to_json(back.config) == to_json(g.config));

    FunctionChain c{"chain-00001", {t.id(0), t.id(1), t.id(0)}};
    auto j = chain_to_json(c, {{t.id(0), "a"}, {t.id(1), "b"}});
    CHECK(j["length"] == 2);
    CHECK(j["steps"][1]["name"] == "b");
    auto c2 = chain_from_json(j);
    CHECK(c2.id == c.id);
    CHECK(c2.steps == c.steps);
}

TEST_CASE("graph config validation") {
    GraphConfig c;
    CHECK_NOTHROW(c.validate());
    c.tau = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.walk_len_min = 6;
    c.walk_len_max = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.random_edge_rate = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(graph_config_from_json(json{{"tau", "high"}}), ConfigError);
    CHECK(graph_config_from_json(json{{"tau", 0.8}}).tau == 0.8);
}

}
