#include "toolforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <unordered_map>

#include "toolforge/embedder.hpp"
#include "toolforge/error.hpp"
#include "toolforge/quality.hpp"
#include "toolforge/sampler.hpp"
#include "toolforge/spec_model.hpp"
#include "toolforge/stats.hpp"

namespace toolforge {

namespace fs = std::filesystem;

// ---- config ------------------------------------------------------------------

void PipelineConfig::validate() const {
    if (work_dir.empty()) throw ConfigError("work_dir is required");
    if (inputs.empty()) throw ConfigError("at least one input is required");
    std::set<std::string> sources;
    for (const auto& in : inputs) {
        if (in.source.empty()) throw ConfigError("input source label is empty");
        if (!sources.insert(in.source).second) throw ConfigError("duplicate input source '" + in.source + "'");
    }
    for (auto role : kGatewayRoles) {
        auto it = gateways.find(std::string(role));
        if (it == gateways.end()) throw ConfigError("gateway role '" + std::string(role) + "' is not configured");
        it->second.validate();
    }
    graph.validate();
    simulation.validate();
    if (chain_count == 0) throw ConfigError("chain_count must be positive");
    if (workers == 0) throw ConfigError("workers must be positive");
    if (embed_batch_size == 0) throw ConfigError("embed_batch_size must be positive");
    if (retries.completion < 0 || retries.validator < 0 || retries.intent < 0 || retries.judge < 0 ||
        retries.domain < 0) {
        throw ConfigError("retries must be >= 0");
    }
}

void PipelineConfig::set_seed(std::uint64_t s) {
    seed = s;
    graph.rng_seed = s;
    for (auto& [_, g] : gateways) g.seed = s;
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> kKnown = {"work_dir", "seed", "inputs", "gateways", "graph", "chain_count",
                                                 "simulation", "retries", "workers", "embed_batch_size", "limit",
                                                 "audit_log"};
    for (const auto& [key, _] : j.items()) {
        if (!kKnown.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    PipelineConfig cfg;
    try {
        cfg.work_dir = resolve(j.at("work_dir").get<std::string>()).lexically_normal();
        for (const auto& in : j.at("inputs")) {
            cfg.inputs.push_back({in.at("source").get<std::string>(), resolve(in.at("path").get<std::string>())});
        }
        GatewayConfig base;
        const json gws = j.value("gateways", json::object());
        if (!gws.is_object()) throw ConfigError("gateways must be an object");
        for (const auto& [role, _] : gws.items()) {
            if (role != "default" &&
                std::find(kGatewayRoles.begin(), kGatewayRoles.end(), role) == kGatewayRoles.end()) {
                throw ConfigError("unknown gateway role '" + role + "'");
            }
        }
        if (gws.contains("default")) base = gateway_config_from_json(gws["default"], base);
        for (auto role : kGatewayRoles) {
            const std::string r(role);
            GatewayConfig g = gws.contains(r) ? gateway_config_from_json(gws[r], base) : base;
            g.label = r;
            if (!g.transcript.empty()) g.transcript = resolve(g.transcript).string();
            cfg.gateways[r] = g;
        }
        if (j.contains("graph")) cfg.graph = graph_config_from_json(j["graph"]);
        if (j.contains("simulation")) cfg.simulation = sim_limits_from_json(j["simulation"]);
        cfg.chain_count = j.value("chain_count", cfg.chain_count);
        cfg.workers = j.value("workers", cfg.workers);
        cfg.embed_batch_size = j.value("embed_batch_size", cfg.embed_batch_size);
        if (j.contains("limit") && !j["limit"].is_null()) cfg.limit = j["limit"].get<std::size_t>();
        if (j.contains("audit_log")) cfg.audit_log = resolve(j["audit_log"].get<std::string>());
        if (j.contains("retries")) {
            const auto& r = j["retries"];
            cfg.retries.completion = r.value("completion", cfg.retries.completion);
            cfg.retries.validator = r.value("validator", cfg.retries.validator);
            cfg.retries.intent = r.value("intent", cfg.retries.intent);
            cfg.retries.judge = r.value("judge", cfg.retries.judge);
            cfg.retries.domain = r.value("domain", cfg.retries.domain);
        }
        cfg.set_seed(j.value("seed", std::uint64_t{0}));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    auto j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
    return pipeline_config_from_json(j, fs::absolute(path).parent_path());
}

json stage_section(const PipelineConfig& cfg, std::string_view stage) {
    auto gw = [&](const char* role) {
        json g = to_json(cfg.gateways.at(role));
        g.erase("concurrency_limit"); // throughput only
        return g;
    };
    json s = {{"stage", stage}, {"seed", cfg.seed}, {"limit", cfg.limit ? json(*cfg.limit) : json(nullptr)}};
    if (stage == "normalize") {
        json inputs = json::array();
        for (const auto& in : cfg.inputs) inputs.push_back({{"source", in.source}, {"path", in.path.string()}});
        s["inputs"] = inputs;
        s["gateway"] = gw("completion");
        s["retries"] = cfg.retries.completion;
    } else if (stage == "embed") {
        s["gateway"] = gw("embedder");
    } else if (stage == "graph") {
        s["graph"] = to_json(cfg.graph);
        s["gateway"] = gw("validator");
        s["retries"] = cfg.retries.validator;
    } else if (stage == "chains") {
        s["graph"] = to_json(cfg.graph);
        s["chain_count"] = cfg.chain_count;
    } else if (stage == "intents") {
        s["gateway"] = gw("intent");
        s["retries"] = cfg.retries.intent;
    } else if (stage == "simulate") {
        s["user"] = gw("user");
        s["assistant"] = gw("assistant");
        s["tool"] = gw("tool");
        s["simulation"] = to_json(cfg.simulation);
    } else if (stage == "filter") {
        s["gateway"] = gw("judge");
        s["retries"] = cfg.retries.judge;
    } else if (stage == "stats") {
        s["gateway"] = gw("domain");
        s["retries"] = cfg.retries.domain;
    }
    return s;
}

std::string stage_config_hash(const PipelineConfig& cfg, std::string_view stage) {
    return sha256_hex(stage_section(cfg, stage).dump());
}

// ---- journal -----------------------------------------------------------------

// Append-only JSONL of finished items. A torn last line from a crash is
// ignored on load.
class Pipeline::Journal {
public:
    explicit Journal(fs::path path) : path_(std::move(path)) {}

    std::vector<json> load() const {
        std::vector<json> out;
        std::ifstream in(path_);
        std::string line;
        while (std::getline(in, line)) {
            auto j = json::parse(line, nullptr, false);
            if (!j.is_discarded()) out.push_back(std::move(j));
        }
        return out;
    }

    void append(const json& record) {
        std::lock_guard lock(mu_);
        if (!out_.is_open()) out_.open(path_, std::ios::app);
        out_ << record.dump() << '\n';
        out_.flush();
    }

    void close() {
        std::lock_guard lock(mu_);
        if (out_.is_open()) out_.close();
    }

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::mutex mu_;
    std::ofstream out_;
};

// ---- pipeline ----------------------------------------------------------------

namespace {

std::vector<json> read_required(const fs::path& p) {
    if (!fs::exists(p)) throw StageInputMissing("missing stage input " + p.string());
    return read_jsonl(p);
}

json read_json_required(const fs::path& p) {
    if (!fs::exists(p)) throw StageInputMissing("missing stage input " + p.string());
    auto j = json::parse(read_file(p), nullptr, false);
    if (j.is_discarded()) throw ParseFailure("malformed JSON in " + p.string());
    return j;
}

std::vector<FunctionSpec> load_functions(const fs::path& p) {
    std::vector<FunctionSpec> out;
    for (const auto& r : read_required(p)) out.push_back(from_record(r));
    return out;
}

template <class T>
void apply_limit(std::vector<T>& items, const std::optional<std::size_t>& limit) {
    if (limit && items.size() > *limit) items.resize(*limit);
}

// A raw input line may hold one tool, an array of tools, or a record with a
// "tools" field (array, or a JSON string of an array).
std::vector<json> tools_in_line(const json& line) {
    if (line.is_array()) return line.get<std::vector<json>>();
    if (line.is_object() && line.contains("tools") && !line.contains("name")) {
        json tools = line["tools"];
        if (tools.is_string()) tools = json::parse(tools.get<std::string>(), nullptr, false);
        if (tools.is_array()) return tools.get<std::vector<json>>();
        return {};
    }
    return {line};
}

std::string chain_suffix(const std::string& chain_id) {
    auto pos = chain_id.rfind('-');
    return pos == std::string::npos ? chain_id : chain_id.substr(pos + 1);
}

} // namespace

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!cfg_.audit_log.empty()) {
        fs::create_directories(cfg_.audit_log.parent_path());
        audit_ = std::make_shared<AuditLog>(cfg_.audit_log);
    }
}

Gateway& Pipeline::gateway(std::string_view role) {
    std::lock_guard lock(gateways_mu_);
    auto it = gateways_.find(role);
    if (it != gateways_.end()) return *it->second;
    const auto& gc = cfg_.gateways.at(std::string(role));
    auto gw = std::make_unique<Gateway>(gc, make_backend(gc), audit_);
    return *gateways_.emplace(std::string(role), std::move(gw)).first->second;
}

fs::path Pipeline::manifest_path(std::string_view stage) const {
    return path(std::string(stage) + ".manifest.json");
}

fs::path Pipeline::journal_path(std::string_view stage) const {
    return path(std::string(stage) + ".partial.jsonl");
}

fs::path Pipeline::journal_meta_path(std::string_view stage) const {
    return path(std::string(stage) + ".partial.meta.json");
}

std::string Pipeline::primary_output(std::string_view stage) {
    static const std::map<std::string, std::string, std::less<>> kOutputs = {
        {"normalize", "functions.jsonl"}, {"embed", "embeddings.jsonl"},     {"graph", "graph.jsonl"},
        {"chains", "chains.jsonl"},       {"intents", "intents.jsonl"},      {"simulate", "trajectories.jsonl"},
        {"filter", "annotated.jsonl"},    {"split", "samples.jsonl"},        {"stats", "stats.json"},
    };
    auto it = kOutputs.find(stage);
    if (it == kOutputs.end()) throw ConfigError("unknown stage '" + std::string(stage) + "'");
    return it->second;
}

std::string Pipeline::input_hash(std::string_view stage) const {
    if (stage == "normalize") {
        std::string acc;
        for (const auto& in : cfg_.inputs) {
            if (!fs::exists(in.path)) throw StageInputMissing("missing input " + in.path.string());
            acc += in.source + ":" + file_sha256(in.path) + "\n";
        }
        return sha256_hex(acc);
    }
    auto it = std::find(kStages.begin(), kStages.end(), stage);
    const fs::path prev = path(primary_output(*(it - 1)));
    if (!fs::exists(prev)) throw StageInputMissing("missing stage input " + prev.string());
    return file_sha256(prev);
}

StageResult Pipeline::run_stage(std::string_view stage, bool resume) {
    if (std::find(kStages.begin(), kStages.end(), stage) == kStages.end()) {
        throw ConfigError("unknown stage '" + std::string(stage) + "'");
    }
    const auto start = std::chrono::steady_clock::now();
    fs::create_directories(cfg_.work_dir);
    const std::string config_hash = stage_config_hash(cfg_, stage);
    const std::string in_hash = input_hash(stage);
    const fs::path output = path(primary_output(stage));

    StageResult result;
    result.stage = stage;
    if (resume) {
        if (fs::exists(manifest_path(stage))) {
            const json m = read_json_required(manifest_path(stage));
            if (m.value("config_hash", "") != config_hash) {
                throw ConfigHashMismatch("stage '" + std::string(stage) + "' was run under a different config");
            }
            if (m.value("input_hash", "") == in_hash && fs::exists(output) &&
                m.value("output_hash", "") == file_sha256(output)) {
                result.skipped = true;
                result.counts = m.value("counts", json::object());
                return result;
            }
        }
        if (fs::exists(journal_meta_path(stage))) {
            const json meta = read_json_required(journal_meta_path(stage));
            if (meta.value("config_hash", "") != config_hash) {
                throw ConfigHashMismatch("partial '" + std::string(stage) + "' was started under a different config");
            }
            if (meta.value("input_hash", "") != in_hash) fs::remove(journal_path(stage));
        }
    } else {
        fs::remove(journal_path(stage));
    }
    write_file_atomic(journal_meta_path(stage),
                      json{{"config_hash", config_hash}, {"input_hash", in_hash}}.dump() + "\n");

    Journal journal(journal_path(stage));
    result.counts = run_body(stage, journal);
    journal.close();

    result.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest = {{"stage", stage},
                     {"config_hash", config_hash},
                     {"seed", cfg_.seed},
                     {"input_hash", in_hash},
                     {"output", primary_output(stage)},
                     {"output_hash", file_sha256(output)},
                     {"counts", result.counts},
                     {"duration_s", result.duration_s}};
    write_file_atomic(manifest_path(stage), manifest.dump(2) + "\n");
    fs::remove(journal_path(stage));
    fs::remove(journal_meta_path(stage));
    return result;
}

std::vector<StageResult> Pipeline::run_all(bool resume) {
    std::vector<StageResult> out;
    for (auto stage : kStages) out.push_back(run_stage(stage, resume));
    return out;
}

json Pipeline::run_body(std::string_view stage, Journal& journal) {
    if (stage == "normalize") return normalize(journal);
    if (stage == "embed") return embed();
    if (stage == "graph") return graph(journal);
    if (stage == "chains") return chains();
    if (stage == "intents") return intents(journal);
    if (stage == "simulate") return simulate(journal);
    if (stage == "filter") return filter(journal);
    if (stage == "split") return split();
    return stats();
}

// ---- stages --------------------------------------------------------------------

json Pipeline::normalize(Journal& journal) {
    std::vector<FunctionSpec> parsed;
    json rejected = json::array();
    for (const auto& in : cfg_.inputs) {
        std::ifstream file(in.path);
        if (!file) throw StageInputMissing("cannot read input " + in.path.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(file, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            const std::string locator = in.path.filename().string() + ":" + std::to_string(line_no);
            auto doc = json::parse(line, nullptr, false);
            if (doc.is_discarded()) {
                rejected.push_back({{"locator", locator}, {"error", "malformed JSON"}});
                continue;
            }
            const auto tools = tools_in_line(doc);
            for (std::size_t k = 0; k < tools.size(); ++k) {
                const std::string loc = tools.size() > 1 ? locator + "#" + std::to_string(k) : locator;
                try {
                    parsed.push_back(parse_function_spec(tools[k], {in.source, loc}));
                } catch (const Error& e) {
                    rejected.push_back({{"locator", loc}, {"error", e.what()}});
                }
            }
        }
    }
    parsed = dedup_by_id(std::move(parsed));
    apply_limit(parsed, cfg_.limit);

    std::map<std::string, json> done;
    for (const auto& r : journal.load()) done[r.at("source_id").get<std::string>()] = r;

    std::vector<std::optional<FunctionSpec>> completed(parsed.size());
    std::vector<std::string> failures(parsed.size());
    std::size_t reused = 0;
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        auto it = done.find(parsed[i].id);
        if (it == done.end()) {
            todo.push_back(i);
            continue;
        }
        ++reused;
        if (it->second["record"].is_null()) failures[i] = it->second.value("error", "completion failed");
        else completed[i] = from_record(it->second["record"]);
    }
    Gateway& gw = gateway("completion");
    parallel_for(todo.size(), cfg_.workers, [&](std::size_t k) {
        const std::size_t i = todo[k];
        json entry = {{"source_id", parsed[i].id}};
        try {
            completed[i] = complete_spec(parsed[i], gw, {cfg_.retries.completion});
            entry["record"] = to_record(*completed[i]);
        } catch (const CompletionFailed& e) {
            failures[i] = e.what();
            entry["record"] = nullptr;
            entry["error"] = e.what();
        }
        journal.append(entry);
    });

    std::vector<FunctionSpec> specs;
    std::size_t was_complete = 0, by_model = 0;
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        if (parsed[i].is_complete()) ++was_complete;
        else if (completed[i]) ++by_model;
        if (completed[i]) specs.push_back(std::move(*completed[i]));
        else rejected.push_back({{"locator", parsed[i].provenance.locator}, {"error", failures[i]}});
    }
    specs = dedup_by_id(std::move(specs));
    std::vector<json> records;
    for (const auto& s : specs) records.push_back(to_record(s));
    write_jsonl_atomic(path("functions.jsonl"), records);
    write_jsonl_atomic(path("normalize_rejects.jsonl"), rejected.get<std::vector<json>>());
    return {{"parsed", parsed.size()},
            {"already_complete", was_complete},
            {"completed_by_model", by_model},
            {"rejected", rejected.size()},
            {"functions", specs.size()},
            {"reused", reused},
            {"ran", todo.size()}};
}

json Pipeline::embed() {
    const auto specs = load_functions(path("functions.jsonl"));
    EmbeddingCache cache(journal_path("embed"));
    EmbedStats st;
    const auto map = embed_parameters(specs, gateway("embedder"), cache, {cfg_.embed_batch_size}, &st);
    write_jsonl_atomic(path("embeddings.jsonl"), cache.records());
    return {{"parameters", map.size()},
            {"texts", st.texts},
            {"cache_hits", st.cache_hits},
            {"gateway_batches", st.gateway_batches}};
}

json Pipeline::graph(Journal& journal) {
    const auto specs = load_functions(path("functions.jsonl"));
    EmbeddingCache cache;
    for (const auto& r : read_required(path("embeddings.jsonl"))) {
        cache.insert(r.at("text").get<std::string>(), r.at("vector").get<Embedding>());
    }
    const auto emb = embed_parameters(specs, gateway("embedder"), cache, {cfg_.embed_batch_size});

    std::map<std::string, std::vector<Edge>> completed;
    for (const auto& r : journal.load()) {
        std::vector<Edge> edges;
        for (const auto& e : r.at("edges")) edges.push_back(edge_from_json(e));
        completed[r.at("src").get<std::string>()] = std::move(edges);
    }
    BuildOptions opts;
    opts.workers = cfg_.workers;
    opts.completed_sources = &completed;
    opts.on_source_done = [&](const std::string& src, const std::vector<Edge>& edges) {
        json arr = json::array();
        for (const auto& e : edges) arr.push_back(edge_to_json(e));
        journal.append({{"src", src}, {"edges", std::move(arr)}});
    };
    const auto validator = gateway_validator(gateway("validator"), cfg_.graph.min_validator_score,
                                             cfg_.retries.validator);
    const auto g = build_graph(specs, emb, validator, cfg_.graph, opts);

    std::size_t injected = 0;
    for (const auto& [_, edges] : g.adjacency) {
        for (const auto& e : edges) injected += e.injected ? 1 : 0;
    }
    write_jsonl_atomic(path("graph.jsonl"), graph_records(g));
    write_file_atomic(path("graph_meta.json"), graph_meta(g).dump() + "\n");
    return {{"nodes", g.nodes.size()},
            {"edges", g.edge_count()},
            {"injected_edges", injected},
            {"reused_sources", completed.size()}};
}

json Pipeline::chains() {
    const auto meta = read_json_required(path("graph_meta.json"));
    auto g = graph_from_records(meta, read_required(path("graph.jsonl")));
    std::map<std::string, std::string> names;
    for (const auto& s : load_functions(path("functions.jsonl"))) names[s.id] = s.name;
    const auto sampled = sample_chains(g, cfg_.graph, cfg_.chain_count);
    std::vector<json> records;
    for (const auto& c : sampled.chains) records.push_back(chain_to_json(c, names));
    write_jsonl_atomic(path("chains.jsonl"), records);
    return {{"chains", sampled.chains.size()}, {"requested", cfg_.chain_count}, {"exhausted", sampled.exhausted}};
}

json Pipeline::intents(Journal& journal) {
    std::vector<FunctionChain> chain_list;
    for (const auto& r : read_required(path("chains.jsonl"))) chain_list.push_back(chain_from_json(r));
    apply_limit(chain_list, cfg_.limit);
    std::map<std::string, FunctionSpec> corpus;
    for (auto& s : load_functions(path("functions.jsonl"))) corpus.emplace(s.id, std::move(s));

    std::map<std::string, json> done;
    for (const auto& r : journal.load()) done[r.at("chain_id").get<std::string>()] = r;

    std::vector<json> results(chain_list.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < chain_list.size(); ++i) {
        auto it = done.find(chain_list[i].id);
        if (it != done.end()) results[i] = it->second;
        else todo.push_back(i);
    }
    Gateway& gw = gateway("intent");
    parallel_for(todo.size(), cfg_.workers, [&](std::size_t k) {
        const auto& chain = chain_list[todo[k]];
        json entry = {{"chain_id", chain.id}};
        try {
            entry["intent"] = intent_to_json(synthesize_intent(gw, chain, corpus, cfg_.retries.intent));
        } catch (const IntentFormatError& e) {
            entry["intent"] = nullptr;
            entry["error"] = e.what();
        }
        journal.append(entry);
        results[todo[k]] = std::move(entry);
    });

    std::vector<json> records;
    std::size_t failed = 0;
    for (const auto& r : results) {
        if (r["intent"].is_null()) ++failed;
        else records.push_back(r["intent"]);
    }
    write_jsonl_atomic(path("intents.jsonl"), records);
    return {{"intents", records.size()},
            {"format_failures", failed},
            {"reused", chain_list.size() - todo.size()},
            {"ran", todo.size()}};
}

json Pipeline::simulate(Journal& journal) {
    std::vector<UserIntent> intent_list;
    for (const auto& r : read_required(path("intents.jsonl"))) intent_list.push_back(intent_from_json(r));
    apply_limit(intent_list, cfg_.limit);
    std::map<std::string, FunctionChain> chain_by_id;
    for (const auto& r : read_required(path("chains.jsonl"))) {
        auto c = chain_from_json(r);
        chain_by_id.emplace(c.id, std::move(c));
    }
    std::map<std::string, FunctionSpec> corpus;
    for (auto& s : load_functions(path("functions.jsonl"))) corpus.emplace(s.id, std::move(s));

    std::map<std::string, json> done;
    for (const auto& r : journal.load()) done[r.at("id").get<std::string>()] = r;

    std::vector<json> results(intent_list.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < intent_list.size(); ++i) {
        const std::string id = "traj-" + chain_suffix(intent_list[i].chain_id);
        auto it = done.find(id);
        if (it != done.end()) results[i] = it->second;
        else todo.push_back(i);
    }
    Agents agents{gateway("user"), gateway("assistant"), gateway("tool")};
    parallel_for(todo.size(), cfg_.workers, [&](std::size_t k) {
        const auto& intent = intent_list[todo[k]];
        auto chain = chain_by_id.find(intent.chain_id);
        if (chain == chain_by_id.end()) throw StageInputMissing("intent refers to unknown chain " + intent.chain_id);
        std::vector<FunctionSpec> tools;
        std::set<std::string> seen;
        for (const auto& step : chain->second.steps) {
            if (!seen.insert(step).second) continue;
            auto spec = corpus.find(step);
            if (spec == corpus.end()) throw StageInputMissing("chain step " + step + " missing from functions");
            tools.push_back(spec->second);
        }
        const std::string id = "traj-" + chain_suffix(intent.chain_id);
        const std::uint64_t seed = mix64(cfg_.seed ^ fnv1a64(id));
        json record = trajectory_to_json(run_simulation(agents, intent, tools, cfg_.simulation, seed, id));
        journal.append(record);
        results[todo[k]] = std::move(record);
    });

    std::map<std::string, std::size_t> outcomes;
    for (const auto& r : results) ++outcomes[r.at("outcome").get<std::string>()];
    write_jsonl_atomic(path("trajectories.jsonl"), results);
    return {{"trajectories", results.size()},
            {"outcomes", outcomes},
            {"reused", intent_list.size() - todo.size()},
            {"ran", todo.size()}};
}

json Pipeline::filter(Journal& journal) {
    std::vector<Trajectory> pool;
    for (const auto& r : read_required(path("trajectories.jsonl"))) pool.push_back(trajectory_from_json(r));
    apply_limit(pool, cfg_.limit);

    std::map<std::string, json> done;
    for (const auto& r : journal.load()) done[r.at("trajectory_id").get<std::string>()] = r;

    std::vector<json> results(pool.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto it = done.find(pool[i].id);
        if (it != done.end()) results[i] = it->second;
        else todo.push_back(i);
    }
    Gateway& gw = gateway("judge");
    parallel_for(todo.size(), cfg_.workers, [&](std::size_t k) {
        const auto& t = pool[todo[k]];
        const auto q = apply_quality({t}, gw, {cfg_.retries.judge, 1});
        json verdicts = json::array();
        for (const auto& v : q.verdicts) verdicts.push_back(verdict_to_json(v));
        json entry = {{"trajectory_id", t.id},
                      {"verdicts", std::move(verdicts)},
                      {"annotated", q.survivors.empty() ? json(nullptr) : annotated_to_json(q.survivors.front())},
                      {"report", report_to_json(q.report)}};
        journal.append(entry);
        results[todo[k]] = std::move(entry);
    });

    FilterReport total;
    std::vector<json> verdicts;
    std::vector<json> annotated;
    for (const auto& r : results) {
        const auto rep = report_from_json(r.at("report"));
        total.input += rep.input;
        total.auto_rejected_non_stopped += rep.auto_rejected_non_stopped;
        total.judge_rejected += rep.judge_rejected;
        total.surviving += rep.surviving;
        total.turns_total += rep.turns_total;
        total.turns_masked += rep.turns_masked;
        total.judge_calls += rep.judge_calls;
        for (const auto& v : r.at("verdicts")) verdicts.push_back(v);
        if (!r.at("annotated").is_null()) annotated.push_back(r.at("annotated"));
    }
    write_jsonl_atomic(path("verdicts.jsonl"), verdicts);
    write_file_atomic(path("filter_report.json"), report_to_json(total).dump(2) + "\n");
    write_jsonl_atomic(path("annotated.jsonl"), annotated);
    json counts = report_to_json(total);
    counts["reused"] = pool.size() - todo.size();
    counts["ran"] = todo.size();
    return counts;
}

json Pipeline::split() {
    std::vector<Trajectory> pool;
    for (const auto& r : read_required(path("trajectories.jsonl"))) pool.push_back(trajectory_from_json(r));
    const auto survivors = annotated_from_records(read_required(path("annotated.jsonl")), pool);
    std::vector<TrainingSample> samples;
    for (const auto& a : survivors) {
        auto s = split_trajectory(a);
        samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    const auto records = serialize_samples(std::move(samples));
    write_jsonl_atomic(path("samples.jsonl"), records);
    const auto manifest = build_manifest({{"toolforge", path("samples.jsonl"), records.size()}});
    write_file_atomic(path("manifest.json"), manifest_to_json(manifest).dump(2) + "\n");
    return {{"trajectories", manifest.total_trajectories}, {"samples", manifest.total_samples}};
}

json Pipeline::stats() {
    std::vector<Trajectory> pool;
    for (const auto& r : read_required(path("trajectories.jsonl"))) pool.push_back(trajectory_from_json(r));
    std::vector<TrainingSample> samples;
    for (const auto& r : read_required(path("samples.jsonl"))) samples.push_back(sample_from_json(r));
    std::vector<UserIntent> intent_list;
    for (const auto& r : read_required(path("intents.jsonl"))) intent_list.push_back(intent_from_json(r));

    const auto domains = classify_domains(gateway("domain"), intent_list, cfg_.workers, cfg_.retries.domain);
    std::unordered_map<std::string, const UserIntent*> by_chain;
    for (const auto& i : domains.labeled) by_chain.emplace(i.chain_id, &i);
    for (auto& t : pool) {
        auto it = by_chain.find(t.intent.chain_id);
        if (it != by_chain.end()) t.intent.domain_labels = it->second->domain_labels;
    }
    StatsReport report = compute_stats(pool, samples);
    report.domains = domains.distribution;

    std::vector<json> labeled;
    for (const auto& i : domains.labeled) labeled.push_back(intent_to_json(i));
    write_jsonl_atomic(path("domains.jsonl"), labeled);
    write_file_atomic(path("stats_messages_per_trajectory.csv"),
                      histogram_csv(report.messages_per_trajectory, "messages"));
    write_file_atomic(path("stats_context_messages_per_sample.csv"),
                      histogram_csv(report.context_messages_per_sample, "context_messages"));
    write_file_atomic(path("stats_user_messages_per_trajectory.csv"),
                      histogram_csv(report.user_messages_per_trajectory, "user_messages"));
    write_file_atomic(path("stats_tool_run_lengths.csv"), histogram_csv(report.tool_run_lengths, "run_length"));
    write_file_atomic(path("stats_domains.csv"), domains_csv(report.domains));
    write_file_atomic(path("stats.json"), stats_to_json(report).dump(2) + "\n");
    return {{"trajectories", pool.size()},
            {"samples", samples.size()},
            {"intents", intent_list.size()},
            {"domain_format_errors", domains.format_errors}};
}

} // namespace toolforge
