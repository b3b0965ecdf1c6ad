#pragma once

#include <afc/clustering.hpp>
#include <afc/image.hpp>

#include <span>
#include <string>
#include <vector>

namespace afc {

enum class NmiNormalization {
    geometric,  // I / sqrt(H(U) H(V))
    arithmetic, // 2 I / (H(U) + H(V))
};

/// Normalized mutual information with natural logarithms; 0 when either entropy is 0.
double nmi(const Partition& u, const Partition& v, NmiNormalization norm = NmiNormalization::geometric);

/// Complete linkage on raw pixels scaled to [0, 1].
Dendrogram pixel_baseline(std::span<const ImageRecord> images);

struct LevelRow {
    unsigned level = 0;
    std::size_t cluster_count = 0;
    double nmi_baseline = 0.0;
    double nmi_method = 0.0;
};

struct LevelReport {
    std::vector<LevelRow> rows;

    /// Aligned plain-text table.
    [[nodiscard]] std::string to_table() const;
    /// level,clusters,baseline_nmi,method_nmi
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] std::string to_json() const;
};

LevelReport level_report(const Dendrogram& method, const Dendrogram& baseline, const Partition& true_labels,
                         unsigned max_level, NmiNormalization norm = NmiNormalization::geometric);

} // namespace afc
