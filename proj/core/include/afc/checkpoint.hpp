#pragma once

#include <afc/model.hpp>

#include <cstdint>
#include <filesystem>

namespace afc {

struct CheckpointInfo {
    std::uint64_t seed = 0;
    int round = 0;
    /// False for the freshly initialized model written before any training.
    bool trained = false;
};

struct Checkpoint {
    EmbeddingModel model;
    CheckpointInfo info;
};

/// Writes `<path>` (JSON manifest: layer specs, embedding_dim, normalize flag, seed,
/// round) and `<path without extension>.params` (parameters as little-endian float32
/// in declared layer order).
void save_checkpoint(const std::filesystem::path& manifest_path, const EmbeddingModel& model,
                     const CheckpointInfo& info);

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path);

} // namespace afc
