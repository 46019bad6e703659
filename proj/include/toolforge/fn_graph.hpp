#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/embedder.hpp"
#include "toolforge/gateway.hpp"
#include "toolforge/spec_model.hpp"

namespace toolforge {

inline constexpr double kNoCandidate = -std::numeric_limits<double>::infinity();

struct ValidatorScores {
    int field_transitivity = 0;
    int intent_coherence = 0;

    bool operator==(const ValidatorScores&) const = default;
};

struct Edge {
    std::string src;
    std::string dst;
    double score = kNoCandidate;
    std::string best_output; // output parameter of src
    std::string best_input;  // input parameter of dst
    std::optional<ValidatorScores> validator_scores;
    bool injected = false;

    bool operator==(const Edge&) const = default;
};

struct GraphConfig {
    double tau = 0.70;
    int min_validator_score = 6;
    double random_edge_rate = 0.0;
    int walk_len_min = 5;
    int walk_len_max = 20;
    int node_visit_budget = 50;
    int max_start_retries = 5;
    std::uint64_t rng_seed = 0;

    void validate() const; // throws ConfigError
};

json to_json(const GraphConfig& cfg);
GraphConfig graph_config_from_json(const json& j, GraphConfig base = {});

struct FunctionGraph {
    std::vector<std::string> nodes;                    // sorted spec ids
    std::map<std::string, std::vector<Edge>> adjacency; // src -> edges sorted by dst
    GraphConfig config;

    std::size_t edge_count() const;
    bool has_edge(const std::string& src, const std::string& dst) const;
};

struct FunctionChain {
    std::string id;
    std::vector<std::string> steps;

    std::size_t length() const { return steps.empty() ? 0 : steps.size() - 1; }
};

// ---- scoring -------------------------------------------------------------------

struct EdgeScore {
    double score = kNoCandidate;
    std::string best_output;
    std::string best_input;
};

// Max cosine over (output of src, input of dst). Vectors are normalized
// here regardless of what the provider returned; zero vectors never match.
// Equal scores keep the lexicographically smallest (output, input) pair.
EdgeScore edge_score(const FunctionSpec& src, const FunctionSpec& dst, const EmbeddingMap& emb);

// ---- validation ----------------------------------------------------------------

struct ValidatorResult {
    std::optional<ValidatorScores> scores;
    bool accepted = false;
    bool format_error = false; // JudgeFormatError after retries; never accepted
    std::string raw_reply;
};

// Strict parse of the two-field validator reply; nullopt on any deviation.
std::optional<ValidatorScores> parse_validator_reply(std::string_view reply);

// A format failure after `retries` re-prompts rejects the candidate.
ValidatorResult validate_edge(Gateway& gw, const FunctionSpec& src, const FunctionSpec& dst,
                              int min_validator_score, int retries = 1);

using EdgeValidator = std::function<ValidatorResult(const FunctionSpec& src, const FunctionSpec& dst)>;

EdgeValidator gateway_validator(Gateway& gw, int min_validator_score, int retries = 1);
EdgeValidator always_accept_validator();

// ---- construction ----------------------------------------------------------------

// True when the injection rule adds src->dst. Depends only on (seed, src, dst)
// so it is independent of evaluation order.
bool injection_draw(std::uint64_t seed, const std::string& src, const std::string& dst, double rate);

struct BuildOptions {
    std::size_t workers = 1;
    // Called once per source node with its finished adjacency list.
    std::function<void(const std::string& src, const std::vector<Edge>& edges)> on_source_done;
    // Sources already finished by an earlier run (resume); their edges are taken as is.
    const std::map<std::string, std::vector<Edge>>* completed_sources = nullptr;
};

FunctionGraph build_graph(const std::vector<FunctionSpec>& corpus, const EmbeddingMap& emb,
                          const EdgeValidator& validator, const GraphConfig& cfg, const BuildOptions& opts = {});

// ---- sampling --------------------------------------------------------------------

struct SampleResult {
    std::vector<FunctionChain> chains;
    bool exhausted = false; // stopped before `count` because budgets or retries ran out
};

// Throws NoEdges when the graph has no edges.
SampleResult sample_chains(const FunctionGraph& graph, const GraphConfig& cfg, std::size_t count);

// ---- files -----------------------------------------------------------------------

json edge_to_json(const Edge& e);
Edge edge_from_json(const json& j);
json graph_meta(const FunctionGraph& g);
std::vector<json> graph_records(const FunctionGraph& g);
FunctionGraph graph_from_records(const json& meta, const std::vector<json>& edges);

json chain_to_json(const FunctionChain& c, const std::map<std::string, std::string>& names);
FunctionChain chain_from_json(const json& j);

} // namespace toolforge
