#include "toolforge/fn_graph.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <unordered_map>

#include "toolforge/error.hpp"
#include "toolforge/kernels.hpp"
#include "toolforge/prompts.hpp"

namespace toolforge {

namespace {

constexpr const char* kFieldTransitivity = "Field transitivity";
constexpr const char* kIntentCoherence = "Potential user intent path coherence";

// Unit vectors for one side (inputs or outputs) of a spec, in name order.
// Zero vectors are dropped: they can never produce a candidate pair.
struct UnitParams {
    std::vector<std::string> names;
    std::vector<Embedding> vectors;
};

UnitParams unit_params(const FunctionSpec& spec, Direction dir, const EmbeddingMap& emb) {
    const auto& list = dir == Direction::Input ? spec.inputs : spec.outputs;
    UnitParams out;
    for (const auto& p : list) {
        auto it = emb.find(ParameterKey{spec.id, dir, p.name});
        if (it == emb.end()) {
            throw MissingEmbedding("no embedding for " + spec.name + (dir == Direction::Input ? ".in." : ".out.") + p.name);
        }
        const auto& v = it->second.vector;
        const double norm = std::sqrt(kernels::squared_norm(v));
        if (!(norm > 0.0) || !std::isfinite(norm)) continue;
        Embedding unit(v.size());
        for (std::size_t k = 0; k < v.size(); ++k) unit[k] = v[k] / norm;
        out.names.push_back(p.name);
        out.vectors.push_back(std::move(unit));
    }
    return out;
}

EdgeScore score_units(const UnitParams& outputs, const UnitParams& inputs) {
    EdgeScore best;
    for (std::size_t o = 0; o < outputs.vectors.size(); ++o) {
        for (std::size_t i = 0; i < inputs.vectors.size(); ++i) {
            if (outputs.vectors[o].size() != inputs.vectors[i].size()) {
                throw DimensionMismatch("embedding dimensions differ between " + outputs.names[o] + " and " +
                                        inputs.names[i]);
            }
            const double s = kernels::dot(outputs.vectors[o], inputs.vectors[i]);
            if (s > best.score) {
                best.score = s;
                best.best_output = outputs.names[o];
                best.best_input = inputs.names[i];
            }
        }
    }
    return best;
}

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased and library-independent.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

} // namespace

void GraphConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("graph.tau must lie in (0, 1)");
    if (min_validator_score < 0 || min_validator_score > 9) throw ConfigError("graph.min_validator_score must be 0-9");
    if (!(random_edge_rate >= 0.0 && random_edge_rate <= 1.0)) throw ConfigError("graph.random_edge_rate must lie in [0, 1]");
    if (walk_len_min < 1 || walk_len_min > walk_len_max) throw ConfigError("graph walk lengths must satisfy 1 <= min <= max");
    if (node_visit_budget < 1) throw ConfigError("graph.node_visit_budget must be positive");
    if (max_start_retries < 1) throw ConfigError("graph.max_start_retries must be positive");
}

json to_json(const GraphConfig& c) {
    return {{"tau", c.tau},
            {"min_validator_score", c.min_validator_score},
            {"random_edge_rate", c.random_edge_rate},
            {"walk_len_min", c.walk_len_min},
            {"walk_len_max", c.walk_len_max},
            {"node_visit_budget", c.node_visit_budget},
            {"max_start_retries", c.max_start_retries},
            {"rng_seed", c.rng_seed}};
}

GraphConfig graph_config_from_json(const json& j, GraphConfig c) {
    if (!j.is_object()) throw ConfigError("graph config must be an object");
    try {
        c.tau = j.value("tau", c.tau);
        c.min_validator_score = j.value("min_validator_score", c.min_validator_score);
        c.random_edge_rate = j.value("random_edge_rate", c.random_edge_rate);
        c.walk_len_min = j.value("walk_len_min", c.walk_len_min);
        c.walk_len_max = j.value("walk_len_max", c.walk_len_max);
        c.node_visit_budget = j.value("node_visit_budget", c.node_visit_budget);
        c.max_start_retries = j.value("max_start_retries", c.max_start_retries);
        c.rng_seed = j.value("rng_seed", c.rng_seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("graph config: ") + e.what());
    }
    c.validate();
    return c;
}

std::size_t FunctionGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& [_, edges] : adjacency) n += edges.size();
    return n;
}

bool FunctionGraph::has_edge(const std::string& src, const std::string& dst) const {
    auto it = adjacency.find(src);
    if (it == adjacency.end()) return false;
    auto pos = std::lower_bound(it->second.begin(), it->second.end(), dst,
                                [](const Edge& e, const std::string& key) { return e.dst < key; });
    return pos != it->second.end() && pos->dst == dst;
}

EdgeScore edge_score(const FunctionSpec& src, const FunctionSpec& dst, const EmbeddingMap& emb) {
    return score_units(unit_params(src, Direction::Output, emb), unit_params(dst, Direction::Input, emb));
}

std::optional<ValidatorScores> parse_validator_reply(std::string_view reply) {
    auto obj = parse_json_object_strict(reply);
    if (!obj || obj->size() != 2 || !obj->contains(kFieldTransitivity) || !obj->contains(kIntentCoherence)) {
        return std::nullopt;
    }
    auto score = [](const json& v) -> std::optional<int> {
        if (!v.is_number_integer()) return std::nullopt;
        auto s = v.get<long long>();
        if (s < 0 || s > 9) return std::nullopt;
        return static_cast<int>(s);
    };
    auto ft = score((*obj)[kFieldTransitivity]);
    auto ic = score((*obj)[kIntentCoherence]);
    if (!ft || !ic) return std::nullopt;
    return ValidatorScores{*ft, *ic};
}

ValidatorResult validate_edge(Gateway& gw, const FunctionSpec& src, const FunctionSpec& dst,
                              int min_validator_score, int retries) {
    ChatRequest req;
    req.temperature = 0.0;
    req.messages.push_back({Role::User, prompts::edge_validator(tool_schema(src).dump(), tool_schema(dst).dump()), {}, {}});
    ValidatorResult result;
    for (int attempt = 0; attempt <= retries; ++attempt) {
        ChatReply reply = gw.chat(req);
        result.raw_reply = reply.content;
        if (auto scores = parse_validator_reply(reply.content)) {
            result.scores = scores;
            result.accepted = std::min(scores->field_transitivity, scores->intent_coherence) >= min_validator_score;
            return result;
        }
        req.messages.push_back({Role::Assistant, reply.content, {}, {}});
        req.messages.push_back({Role::User,
                                prompts::format_reminder("a JSON object with exactly the fields \"Field transitivity\" "
                                                         "and \"Potential user intent path coherence\" (integers 0-9)"),
                                {}, {}});
    }
    result.accepted = false;
    result.format_error = true;
    return result;
}

EdgeValidator gateway_validator(Gateway& gw, int min_validator_score, int retries) {
    return [&gw, min_validator_score, retries](const FunctionSpec& src, const FunctionSpec& dst) {
        return validate_edge(gw, src, dst, min_validator_score, retries);
    };
}

EdgeValidator always_accept_validator() {
    return [](const FunctionSpec&, const FunctionSpec&) {
        ValidatorResult r;
        r.accepted = true;
        return r;
    };
}

bool injection_draw(std::uint64_t seed, const std::string& src, const std::string& dst, double rate) {
    if (rate <= 0.0) return false;
    if (rate >= 1.0) return true;
    const std::uint64_t key = mix64(seed) ^ fnv1a64(src + '\x1f' + dst);
    return unit_interval(key) < rate;
}

FunctionGraph build_graph(const std::vector<FunctionSpec>& corpus, const EmbeddingMap& emb,
                          const EdgeValidator& validator, const GraphConfig& cfg, const BuildOptions& opts) {
    cfg.validate();
    std::vector<const FunctionSpec*> specs;
    specs.reserve(corpus.size());
    for (const auto& s : corpus) specs.push_back(&s);
    std::sort(specs.begin(), specs.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    for (std::size_t i = 1; i < specs.size(); ++i) {
        if (specs[i]->id == specs[i - 1]->id) throw Error("duplicate spec id " + specs[i]->id);
    }

    std::vector<UnitParams> outputs(specs.size()), inputs(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        outputs[i] = unit_params(*specs[i], Direction::Output, emb);
        inputs[i] = unit_params(*specs[i], Direction::Input, emb);
    }

    std::vector<std::vector<Edge>> per_source(specs.size());
    std::mutex callback_mu;
    parallel_for(specs.size(), opts.workers, [&](std::size_t i) {
        const std::string& src = specs[i]->id;
        if (opts.completed_sources) {
            auto done = opts.completed_sources->find(src);
            if (done != opts.completed_sources->end()) {
                per_source[i] = done->second;
                return;
            }
        }
        std::vector<Edge> edges;
        for (std::size_t j = 0; j < specs.size(); ++j) {
            if (i == j) continue;
            const std::string& dst = specs[j]->id;
            EdgeScore sc = score_units(outputs[i], inputs[j]);
            Edge e{src, dst, sc.score, sc.best_output, sc.best_input, std::nullopt, false};
            if (injection_draw(cfg.rng_seed, src, dst, cfg.random_edge_rate)) {
                e.injected = true;
                edges.push_back(std::move(e));
                continue;
            }
            if (!(sc.score > cfg.tau)) continue;
            ValidatorResult verdict = validator(*specs[i], *specs[j]);
            if (!verdict.accepted) continue;
            e.validator_scores = verdict.scores;
            edges.push_back(std::move(e));
        }
        if (opts.on_source_done) {
            std::lock_guard lock(callback_mu);
            opts.on_source_done(src, edges);
        }
        per_source[i] = std::move(edges);
    });

    FunctionGraph g;
    g.config = cfg;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        g.nodes.push_back(specs[i]->id);
        if (per_source[i].empty()) continue;
        std::sort(per_source[i].begin(), per_source[i].end(), [](const Edge& a, const Edge& b) { return a.dst < b.dst; });
        g.adjacency[specs[i]->id] = std::move(per_source[i]);
    }
    return g;
}

SampleResult sample_chains(const FunctionGraph& graph, const GraphConfig& cfg, std::size_t count) {
    cfg.validate();
    if (graph.edge_count() == 0) throw NoEdges("function graph has no edges");

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) index.emplace(graph.nodes[i], i);
    std::vector<std::vector<std::size_t>> out(graph.nodes.size());
    for (const auto& [src, edges] : graph.adjacency) {
        auto s = index.at(src);
        for (const auto& e : edges) out[s].push_back(index.at(e.dst));
    }

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<int> budget(graph.nodes.size(), cfg.node_visit_budget);
    std::vector<int> pending(graph.nodes.size(), 0);
    const auto span = static_cast<std::uint64_t>(cfg.walk_len_max - cfg.walk_len_min + 1);

    SampleResult result;
    while (result.chains.size() < count) {
        const auto target = static_cast<std::size_t>(cfg.walk_len_min) + uniform_index(rng, span);
        bool emitted = false;
        for (int attempt = 0; attempt < cfg.max_start_retries && !emitted; ++attempt) {
            std::vector<std::size_t> starts;
            for (std::size_t n = 0; n < out.size(); ++n) {
                if (budget[n] > 0 && !out[n].empty()) starts.push_back(n);
            }
            if (starts.empty()) break;

            std::vector<std::size_t> walk{starts[uniform_index(rng, starts.size())]};
            std::fill(pending.begin(), pending.end(), 0);
            pending[walk.front()] = 1;
            std::vector<std::size_t> next;
            while (walk.size() - 1 < target) {
                next.clear();
                for (auto d : out[walk.back()]) {
                    if (budget[d] - pending[d] > 0) next.push_back(d);
                }
                if (next.empty()) break;
                auto d = next[uniform_index(rng, next.size())];
                walk.push_back(d);
                ++pending[d];
            }
            if (walk.size() - 1 < static_cast<std::size_t>(cfg.walk_len_min)) continue;

            for (auto n : walk) --budget[n];
            FunctionChain chain;
            chain.id = padded_id("chain-", result.chains.size());
            for (auto n : walk) chain.steps.push_back(graph.nodes[n]);
            result.chains.push_back(std::move(chain));
            emitted = true;
        }
        if (!emitted) {
            result.exhausted = true;
            break;
        }
    }
    return result;
}

json edge_to_json(const Edge& e) {
    json j = {{"src", e.src},
              {"dst", e.dst},
              {"score", std::isfinite(e.score) ? json(e.score) : json(nullptr)},
              {"best_pair", {{"output", e.best_output}, {"input", e.best_input}}},
              {"validator_scores", nullptr},
              {"injected", e.injected}};
    if (e.validator_scores) {
        j["validator_scores"] = {{"field_transitivity", e.validator_scores->field_transitivity},
                                 {"intent_coherence", e.validator_scores->intent_coherence}};
    }
    return j;
}

Edge edge_from_json(const json& j) {
    Edge e;
    e.src = j.at("src").get<std::string>();
    e.dst = j.at("dst").get<std::string>();
    e.score = j.at("score").is_null() ? kNoCandidate : j.at("score").get<double>();
    const auto& pair = j.value("best_pair", json::object());
    e.best_output = pair.value("output", "");
    e.best_input = pair.value("input", "");
    if (j.contains("validator_scores") && j["validator_scores"].is_object()) {
        const auto& v = j["validator_scores"];
        e.validator_scores = ValidatorScores{v.at("field_transitivity").get<int>(), v.at("intent_coherence").get<int>()};
    }
    e.injected = j.value("injected", false);
    return e;
}

json graph_meta(const FunctionGraph& g) {
    return {{"config", to_json(g.config)},
            {"node_count", g.nodes.size()},
            {"edge_count", g.edge_count()},
            {"nodes", g.nodes}};
}

std::vector<json> graph_records(const FunctionGraph& g) {
    std::vector<json> out;
    for (const auto& [_, edges] : g.adjacency) {
        for (const auto& e : edges) out.push_back(edge_to_json(e));
    }
    return out;
}

FunctionGraph graph_from_records(const json& meta, const std::vector<json>& edges) {
    FunctionGraph g;
    g.config = graph_config_from_json(meta.at("config"));
    g.nodes = meta.at("nodes").get<std::vector<std::string>>();
    std::sort(g.nodes.begin(), g.nodes.end());
    for (const auto& j : edges) {
        Edge e = edge_from_json(j);
        g.adjacency[e.src].push_back(std::move(e));
    }
    for (auto& [_, list] : g.adjacency) {
        std::sort(list.begin(), list.end(), [](const Edge& a, const Edge& b) { return a.dst < b.dst; });
    }
    return g;
}

json chain_to_json(const FunctionChain& c, const std::map<std::string, std::string>& names) {
    json steps = json::array();
    for (const auto& id : c.steps) {
        auto it = names.find(id);
        steps.push_back({{"id", id}, {"name", it == names.end() ? "" : it->second}});
    }
    return {{"id", c.id}, {"length", c.length()}, {"steps", std::move(steps)}};
}

FunctionChain chain_from_json(const json& j) {
    FunctionChain c;
    c.id = j.at("id").get<std::string>();
    for (const auto& s : j.at("steps")) c.steps.push_back(s.is_string() ? s.get<std::string>() : s.at("id").get<std::string>());
    return c;
}

} // namespace toolforge
