#include "toolforge/embedder.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "toolforge/error.hpp"

namespace toolforge {

std::string render_embedding_text(const ParameterDef& param) {
    if (param.description.empty()) throw MissingField("parameter '" + param.name + "' has no description");
    if (!param.value_type || param.value_type->tag.empty()) {
        throw MissingField("parameter '" + param.name + "' has no type");
    }
    return "DESC " + param.description + " TYPE " + param.value_type->tag;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path file) : file_(std::move(file)) {
    if (!std::filesystem::exists(file_)) return;
    std::ifstream in(file_);
    std::string line;
    while (std::getline(in, line)) {
        // A torn final line from an interrupted run is skipped, not fatal.
        auto rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("text") || !rec.contains("vector")) continue;
        vectors_[rec["text"].get<std::string>()] = rec["vector"].get<Embedding>();
    }
}

std::optional<Embedding> EmbeddingCache::lookup(const std::string& text) const {
    std::lock_guard lock(mu_);
    auto it = vectors_.find(text);
    if (it == vectors_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingCache::insert(const std::string& text, const Embedding& vector) {
    std::lock_guard lock(mu_);
    if (!vectors_.emplace(text, vector).second) return;
    if (file_.empty()) return;
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::app);
    json rec = {{"text_hash", sha256_hex(text).substr(0, 16)}, {"text", text}, {"vector", vector}};
    out << rec.dump() << '\n';
}

std::size_t EmbeddingCache::size() const {
    std::lock_guard lock(mu_);
    return vectors_.size();
}

std::vector<json> EmbeddingCache::records() const {
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::string, const std::string*>> order;
    order.reserve(vectors_.size());
    for (const auto& [text, _] : vectors_) order.emplace_back(sha256_hex(text).substr(0, 16), &text);
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : *a.second < *b.second;
    });
    std::vector<json> out;
    out.reserve(order.size());
    for (const auto& [hash, text] : order) {
        out.push_back({{"text_hash", hash}, {"text", *text}, {"vector", vectors_.at(*text)}});
    }
    return out;
}

void EmbeddingCache::compact() const {
    if (file_.empty()) return;
    write_jsonl_atomic(file_, records());
}

EmbeddingMap embed_parameters(const std::vector<FunctionSpec>& corpus, Gateway& gw, EmbeddingCache& cache,
                              const EmbedOptions& opts, EmbedStats* stats) {
    EmbeddingMap out;
    std::set<std::string> missing;
    for (const auto& spec : corpus) {
        for (auto [list, dir] : {std::pair{&spec.inputs, Direction::Input}, std::pair{&spec.outputs, Direction::Output}}) {
            for (const auto& p : *list) {
                ParameterKey key{spec.id, dir, p.name};
                std::string text = render_embedding_text(p);
                if (!cache.lookup(text)) missing.insert(text);
                out.emplace(key, ParameterEmbedding{key, std::move(text), {}});
            }
        }
    }
    EmbedStats local;
    local.texts = out.size();

    const std::vector<std::string> pending(missing.begin(), missing.end());
    const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
    const std::size_t batches = (pending.size() + batch - 1) / batch;
    // Each batch lands in the cache as soon as it returns, so a failure in
    // a later batch keeps earlier progress on disk.
    parallel_for(batches, static_cast<std::size_t>(gw.config().concurrency_limit), [&](std::size_t b) {
        const std::size_t begin = b * batch;
        const std::size_t end = std::min(pending.size(), begin + batch);
        std::span<const std::string> slice(pending.data() + begin, end - begin);
        auto vectors = gw.embed(slice);
        for (std::size_t k = 0; k < slice.size(); ++k) cache.insert(slice[k], vectors[k]);
    });
    local.gateway_batches = batches;
    local.cache_hits = local.texts - std::count_if(out.begin(), out.end(), [&](const auto& kv) {
        return missing.count(kv.second.text) > 0;
    });

    std::size_t dim = 0;
    for (auto& [key, emb] : out) {
        emb.vector = *cache.lookup(emb.text);
        if (dim == 0) dim = emb.vector.size();
        if (emb.vector.size() != dim) throw DimensionMismatch("cached vectors disagree on dimension");
    }
    if (stats) *stats = local;
    return out;
}

} // namespace toolforge
