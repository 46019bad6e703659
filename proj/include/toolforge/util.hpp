#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolforge {

using json = nlohmann::json;

// ---- hashing ---------------------------------------------------------------

std::string sha256_hex(std::string_view data);

// Hex SHA-256 of a file's bytes. Missing files hash as the empty string.
std::string file_sha256(const std::filesystem::path& path);

// 64-bit FNV-1a. Stable across processes and platforms.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

// splitmix64 finalizer; good enough to turn structured keys into RNG seeds.
std::uint64_t mix64(std::uint64_t x);

// Uniform double in [0, 1) derived from a 64-bit key.
double unit_interval(std::uint64_t key);

// ---- text ------------------------------------------------------------------

std::string trim(std::string_view s);

// Collapses every run of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view s);

// "chain-" + 7 -> "chain-00007"
std::string padded_id(std::string_view prefix, std::size_t n, int width = 5);

bool is_valid_utf8(std::string_view s);

// Removes a surrounding ``` / ```json fence if the whole reply is fenced.
std::string strip_code_fence(std::string_view s);

// Best-effort: the first balanced {...} object in `text` that parses.
std::optional<json> extract_json_object(std::string_view text);

// Strict: after trimming and fence removal the reply must be one JSON object.
std::optional<json> parse_json_object_strict(std::string_view text);

// ---- files -----------------------------------------------------------------

std::vector<json> read_jsonl(const std::filesystem::path& path);

// Writes to `<path>.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<json>& records);

std::string read_file(const std::filesystem::path& path);

// ---- concurrency -------------------------------------------------------------

// Runs fn(i) for i in [0, count) on up to `workers` threads. Results are
// keyed by index by the caller, so completion order never leaks into output.
// The first exception thrown by any fn is rethrown after all workers join.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

} // namespace toolforge
