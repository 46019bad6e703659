#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/fn_graph.hpp"
#include "toolforge/gateway.hpp"
#include "toolforge/synthesis.hpp"

namespace toolforge {

inline constexpr std::array<std::string_view, 9> kStages = {
    "normalize", "embed", "graph", "chains", "intents", "simulate", "filter", "split", "stats"};

// Gateway roles a config may override; each falls back to "default".
inline constexpr std::array<std::string_view, 9> kGatewayRoles = {
    "completion", "embedder", "validator", "intent", "user", "assistant", "tool", "judge", "domain"};

struct InputSource {
    std::string source;
    std::filesystem::path path;
};

struct RetryConfig {
    int completion = 2;
    int validator = 1;
    int intent = 1;
    int judge = 1;
    int domain = 1;
};

struct PipelineConfig {
    std::filesystem::path work_dir;
    std::uint64_t seed = 0;
    std::vector<InputSource> inputs;
    std::map<std::string, GatewayConfig> gateways; // one per role, default already merged in
    GraphConfig graph;
    std::size_t chain_count = 100;
    SimLimits simulation;
    RetryConfig retries;
    std::size_t workers = 4;
    std::size_t embed_batch_size = 64;
    std::optional<std::size_t> limit; // caps the items each stage takes from its input
    std::filesystem::path audit_log;  // empty: no request log

    void validate() const; // throws ConfigError
    // The seed feeds graph sampling and every mock/offline gateway.
    void set_seed(std::uint64_t s);
};

// Relative paths resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const json& j, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// The part of the config a stage's output depends on. Its hash guards resume.
json stage_section(const PipelineConfig& cfg, std::string_view stage);
std::string stage_config_hash(const PipelineConfig& cfg, std::string_view stage);

struct StageResult {
    std::string stage;
    bool skipped = false; // up to date on resume
    json counts = json::object();
    double duration_s = 0.0;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);

    // Throws StageInputMissing, ConfigHashMismatch (resume under a changed
    // config) or the stage's own errors.
    StageResult run_stage(std::string_view stage, bool resume = false);
    std::vector<StageResult> run_all(bool resume = false);

    const PipelineConfig& config() const { return cfg_; }
    Gateway& gateway(std::string_view role);

    std::filesystem::path path(std::string_view file) const { return cfg_.work_dir / std::string(file); }
    std::filesystem::path manifest_path(std::string_view stage) const;
    // Append-only per-item journal kept while a stage runs.
    std::filesystem::path journal_path(std::string_view stage) const;
    std::filesystem::path journal_meta_path(std::string_view stage) const;

    static std::string primary_output(std::string_view stage);

private:
    class Journal;

    std::string input_hash(std::string_view stage) const;
    json run_body(std::string_view stage, Journal& journal);

    json normalize(Journal& journal);
    json embed();
    json graph(Journal& journal);
    json chains();
    json intents(Journal& journal);
    json simulate(Journal& journal);
    json filter(Journal& journal);
    json split();
    json stats();

    PipelineConfig cfg_;
    std::shared_ptr<AuditLog> audit_;
    std::mutex gateways_mu_;
    std::map<std::string, std::unique_ptr<Gateway>, std::less<>> gateways_;
};

} // namespace toolforge
