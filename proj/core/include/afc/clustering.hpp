#pragma once

#include <afc/image.hpp>
#include <afc/model.hpp>

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace afc {

/// One agglomeration step. Leaves are nodes 0..n-1; merge i creates node n + i.
struct Merge {
    std::size_t left = 0;
    std::size_t right = 0;
    double height = 0.0;

    friend bool operator==(const Merge&, const Merge&) = default;
};

struct Dendrogram {
    std::vector<ImageId> leaves;
    std::vector<Merge> merges;

    [[nodiscard]] std::size_t leaf_count() const { return leaves.size(); }
    friend bool operator==(const Dendrogram&, const Dendrogram&) = default;
};

/// Flat clustering: every leaf maps to a cluster index in 0..cluster_count()-1.
struct Partition {
    std::map<ImageId, int> assignment;

    [[nodiscard]] int cluster_count() const;
    /// Members per cluster, each sorted by id.
    [[nodiscard]] std::vector<std::vector<ImageId>> clusters() const;
};

/// Relabels arbitrary integer labels to contiguous indices ordered by smallest member id.
Partition make_partition(const std::map<ImageId, int>& labels);

enum class LinkageDistance { euclidean, squared_euclidean };

/// Complete linkage (maximum pairwise distance). The pair with the smallest
/// linkage merges first; ties go to the smallest (left, right) node pair.
/// Leaves are taken in ascending id order.
Dendrogram complete_linkage(const EmbeddingTable& embeddings, LinkageDistance distance = LinkageDistance::euclidean);

/// Same, over explicit points. `ids` order defines leaf indices.
Dendrogram complete_linkage(const std::vector<ImageId>& ids, const std::vector<std::vector<double>>& points,
                            LinkageDistance distance = LinkageDistance::euclidean);

/// Undoes the m - 1 latest merges and returns the m resulting clusters.
Partition cut(const Dendrogram& dendrogram, std::size_t m);

/// cut() into 2^level clusters.
Partition level_cut(const Dendrogram& dendrogram, unsigned level);

/// Nested JSON: leaves {"id", "height": 0}, internal nodes {"children": [l, r], "height"}.
std::string dendrogram_to_json(const Dendrogram& dendrogram);

/// Newick with branch length = parent height - child height.
std::string dendrogram_to_newick(const Dendrogram& dendrogram);

} // namespace afc
