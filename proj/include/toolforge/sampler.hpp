#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "toolforge/quality.hpp"

namespace toolforge {

// One training example: everything up to and including the anchor
// assistant message. Loss applies to the anchor's think, content and
// tool_calls only.
struct TrainingSample {
    std::string sample_id;
    std::string source_trajectory;
    std::size_t anchor_index = 0;
    std::vector<Message> context; // messages[0..=anchor_index]
    std::vector<json> tools;
};

// One sample per kept assistant message, in message order. Masked
// assistant messages never anchor a sample but stay in later contexts.
std::vector<TrainingSample> split_trajectory(const AnnotatedTrajectory& annotated);

json sample_to_json(const TrainingSample& s);
TrainingSample sample_from_json(const json& j);

// Sorted by (source_trajectory, anchor_index). Throws SerializationError on
// text that is not valid UTF-8.
std::vector<json> serialize_samples(std::vector<TrainingSample> samples);

struct ManifestRow {
    std::string source;
    std::size_t trajectories = 0;
    std::size_t samples = 0;

    bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestRow> rows;
    std::size_t total_trajectories = 0;
    std::size_t total_samples = 0;
};

struct SampleFile {
    std::string source;
    std::filesystem::path path;
    std::optional<std::size_t> declared_samples; // self-reported count, checked against lines
};

// Counts lines and distinct source trajectories per file. Throws
// ManifestMismatch when a declared count disagrees with the file.
DatasetManifest build_manifest(const std::vector<SampleFile>& files);

json manifest_to_json(const DatasetManifest& m);

} // namespace toolforge
