#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "toolforge/gateway.hpp"
#include "toolforge/spec_model.hpp"

namespace toolforge {

enum class Direction { Input, Output };

struct ParameterKey {
    std::string spec_id;
    Direction direction = Direction::Input;
    std::string param_name;

    auto operator<=>(const ParameterKey&) const = default;
};

struct ParameterEmbedding {
    ParameterKey key;
    std::string text;
    Embedding vector;
};

using EmbeddingMap = std::map<ParameterKey, ParameterEmbedding>;

// "DESC <description> TYPE <type>". Throws MissingField when either part is
// empty, which means the completion stage was skipped.
std::string render_embedding_text(const ParameterDef& param);

// Text-keyed vector cache backed by an append-only JSONL sidecar
// ({text_hash, text, vector} per line), so interrupted runs resume.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::filesystem::path file);

    std::optional<Embedding> lookup(const std::string& text) const;
    void insert(const std::string& text, const Embedding& vector);
    std::size_t size() const;

    // Rewrites the sidecar sorted by text_hash (stable bytes for a given content).
    void compact() const;
    std::vector<json> records() const;

private:
    mutable std::mutex mu_;
    std::filesystem::path file_;
    std::unordered_map<std::string, Embedding> vectors_;
};

struct EmbedOptions {
    std::size_t batch_size = 64;
};

struct EmbedStats {
    std::size_t texts = 0;
    std::size_t cache_hits = 0;
    std::size_t gateway_batches = 0;
};

EmbeddingMap embed_parameters(const std::vector<FunctionSpec>& corpus, Gateway& gw, EmbeddingCache& cache,
                              const EmbedOptions& opts = {}, EmbedStats* stats = nullptr);

} // namespace toolforge
