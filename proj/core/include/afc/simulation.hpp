#pragma once

#include <afc/evaluation.hpp>
#include <afc/session.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace afc {

struct SimulationOptions {
    /// Question batches, the random initialization batch included.
    int rounds = 8;
    int batch_size = 105;
    /// Empty runs in memory.
    std::filesystem::path state_dir;
    /// Stop as soon as the coarse NMI reaches this value.
    std::optional<double> stop_at_coarse_nmi;
    unsigned max_level = 3;
};

struct RoundMetrics {
    int round = 0;
    std::size_t answers = 0;
    double final_loss = 0.0;
    std::size_t candidates = 0;
    std::size_t kept = 0;
    /// NMI of the cut into as many clusters as coarse classes (shape families, or labels).
    double coarse_nmi = 0.0;
};

struct SimulationReport {
    std::vector<RoundMetrics> rounds;
    std::size_t total_answers = 0;
    std::size_t pending_unanswered = 0;
    bool trained = false;
    bool converged = false;
    double coarse_nmi = 0.0;
    std::optional<std::size_t> answers_to_target;
    LevelReport levels;
    std::string dendrogram_json;
    std::string newick;

    [[nodiscard]] std::string to_json() const;
};

/// Coarse ground truth: shape family for synthetic images, class label otherwise.
Partition coarse_partition(std::span<const ImageRecord> records);
/// Fine ground truth for level reports: the nine shapes, or class labels.
Partition fine_partition(std::span<const ImageRecord> records);

/// Drives the full loop with the simulated annotator answering every question.
SimulationReport run_simulation(const Dataset& dataset, SessionConfig config, const SimulationOptions& options);

} // namespace afc
