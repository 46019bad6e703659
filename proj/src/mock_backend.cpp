#include <algorithm>
#include <cmath>
#include <numbers>

#include "toolforge/error.hpp"
#include "toolforge/gateway.hpp"

namespace toolforge {

Embedding hash_embedding(std::string_view text, std::uint64_t seed, int dim) {
    const std::uint64_t base = mix64(fnv1a64(text) ^ mix64(seed));
    Embedding v(static_cast<std::size_t>(dim));
    // Box-Muller over a counter stream gives an isotropic direction.
    for (int k = 0; k < dim; k += 2) {
        double u1 = unit_interval(base + 2 * static_cast<std::uint64_t>(k) + 1);
        double u2 = unit_interval(base + 2 * static_cast<std::uint64_t>(k) + 2);
        u1 = std::max(u1, 0x1.0p-53);
        double r = std::sqrt(-2.0 * std::log(u1));
        v[static_cast<std::size_t>(k)] = r * std::cos(2.0 * std::numbers::pi * u2);
        if (k + 1 < dim) v[static_cast<std::size_t>(k) + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

MockBackend::MockBackend(std::map<std::string, std::string> transcript, std::uint64_t seed, int dim)
    : transcript_(std::move(transcript)), seed_(seed), dim_(dim) {}

std::map<std::string, std::string> MockBackend::load_transcript(const std::filesystem::path& path) {
    auto doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ConfigError("transcript must be a JSON object: " + path.string());
    std::map<std::string, std::string> out;
    for (const auto& [fp, reply] : doc.items()) {
        if (!reply.is_string()) throw ConfigError("transcript reply for " + fp + " is not a string");
        out.emplace(fp, reply.get<std::string>());
    }
    return out;
}

ChatReply MockBackend::chat(const ChatRequest& req) {
    const std::string fp = prompt_fingerprint(req);
    auto it = transcript_.find(fp);
    if (it == transcript_.end()) throw UnscriptedPrompt("no scripted reply for prompt fingerprint " + fp);
    ChatReply reply;
    reply.content = it->second;
    return reply;
}

std::vector<Embedding> MockBackend::embed(std::span<const std::string> texts, const std::string&) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embedding(t, seed_, dim_));
    return out;
}

} // namespace toolforge
