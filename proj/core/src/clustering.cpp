#include <afc/clustering.hpp>
#include <afc/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

namespace afc {

int Partition::cluster_count() const {
    std::set<int> ids;
    for (const auto& [_, c] : assignment) ids.insert(c);
    return static_cast<int>(ids.size());
}

std::vector<std::vector<ImageId>> Partition::clusters() const {
    std::vector<std::vector<ImageId>> out(static_cast<std::size_t>(cluster_count()));
    for (const auto& [id, c] : assignment) {
        if (c < 0 || static_cast<std::size_t>(c) >= out.size()) throw InputError("partition indices are not contiguous");
        out[static_cast<std::size_t>(c)].push_back(id);
    }
    return out;
}

Partition make_partition(const std::map<ImageId, int>& labels) {
    // map iteration is in ascending id order, so first sight == smallest member id
    std::map<int, int> relabel;
    Partition p;
    for (const auto& [id, label] : labels) {
        auto [it, _] = relabel.emplace(label, static_cast<int>(relabel.size()));
        p.assignment.emplace(id, it->second);
    }
    return p;
}

namespace {

class CondensedMatrix {
public:
    explicit CondensedMatrix(std::size_t n) : n_(n), values_(n * (n - 1) / 2) {}
    double& at(std::size_t i, std::size_t j) {
        if (i > j) std::swap(i, j);
        return values_[i * (2 * n_ - i - 1) / 2 + (j - i - 1)];
    }

private:
    std::size_t n_;
    std::vector<double> values_;
};

using Key = std::tuple<double, std::size_t, std::size_t>;

} // namespace

Dendrogram complete_linkage(const std::vector<ImageId>& ids, const std::vector<std::vector<double>>& points,
                            LinkageDistance distance) {
    if (points.empty()) throw InputError("complete_linkage: no points");
    if (ids.size() != points.size()) throw InputError("complete_linkage: ids and points differ in count");
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw InputError("complete_linkage: points have mixed dimensions");
    }
    const std::size_t n = points.size();
    Dendrogram d;
    d.leaves = ids;
    if (n == 1) return d;

    CondensedMatrix dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double sq = sq_distance(points[i], points[j]);
            dist.at(i, j) = distance == LinkageDistance::euclidean ? std::sqrt(sq) : sq;
        }
    }

    std::vector<std::size_t> node(n);
    std::iota(node.begin(), node.end(), std::size_t{0});
    std::vector<char> active(n, 1);
    std::vector<std::size_t> nn(n, 0);

    const auto key = [&](std::size_t s, std::size_t t) {
        const auto a = node[s], b = node[t];
        return Key{dist.at(s, t), std::min(a, b), std::max(a, b)};
    };
    const auto refresh = [&](std::size_t s) {
        bool found = false;
        Key best{};
        for (std::size_t t = 0; t < n; ++t) {
            if (t == s || !active[t]) continue;
            const Key k = key(s, t);
            if (!found || k < best) {
                best = k;
                nn[s] = t;
                found = true;
            }
        }
    };
    for (std::size_t s = 0; s < n; ++s) refresh(s);

    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t best_s = n;
        Key best{};
        for (std::size_t s = 0; s < n; ++s) {
            if (!active[s]) continue;
            const Key k = key(s, nn[s]);
            if (best_s == n || k < best) {
                best = k;
                best_s = s;
            }
        }
        std::size_t s = best_s, t = nn[best_s];
        if (t < s) std::swap(s, t);
        d.merges.push_back(Merge{std::get<1>(best), std::get<2>(best), std::get<0>(best)});

        // Cluster t folds into slot s, which takes the new node id.
        active[t] = 0;
        node[s] = n + step;
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == s) continue;
            dist.at(s, k) = std::max(dist.at(s, k), dist.at(t, k));
        }
        if (step + 2 == n) break;
        refresh(s);
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == s) continue;
            if (nn[k] == s || nn[k] == t) refresh(k);
        }
    }
    return d;
}

Dendrogram complete_linkage(const EmbeddingTable& embeddings, LinkageDistance distance) {
    std::vector<ImageId> ids;
    std::vector<std::vector<double>> points;
    ids.reserve(embeddings.size());
    points.reserve(embeddings.size());
    for (const auto& [id, e] : embeddings) {
        ids.push_back(id);
        points.push_back(e);
    }
    return complete_linkage(ids, points, distance);
}

Partition cut(const Dendrogram& dendrogram, std::size_t m) {
    const std::size_t n = dendrogram.leaf_count();
    if (m < 1 || m > n) throw InputError("cut: cluster count must lie in [1, " + std::to_string(n) + "]");
    if (dendrogram.merges.size() + 1 != n) throw InputError("cut: dendrogram needs exactly n - 1 merges");
    std::vector<std::size_t> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    for (std::size_t i = 0; i < n - m; ++i) {
        const auto& mg = dendrogram.merges[i];
        parent[mg.left] = n + i;
        parent[mg.right] = n + i;
    }
    const auto root = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x];
        return x;
    };
    std::map<std::size_t, ImageId> smallest;
    std::vector<std::size_t> roots(n);
    for (std::size_t leaf = 0; leaf < n; ++leaf) {
        roots[leaf] = root(leaf);
        auto [it, inserted] = smallest.emplace(roots[leaf], dendrogram.leaves[leaf]);
        if (!inserted && dendrogram.leaves[leaf] < it->second) it->second = dendrogram.leaves[leaf];
    }
    std::vector<std::pair<ImageId, std::size_t>> order;
    for (const auto& [r, id] : smallest) order.emplace_back(id, r);
    std::sort(order.begin(), order.end());
    std::map<std::size_t, int> index;
    for (std::size_t i = 0; i < order.size(); ++i) index[order[i].second] = static_cast<int>(i);
    Partition p;
    for (std::size_t leaf = 0; leaf < n; ++leaf) p.assignment[dendrogram.leaves[leaf]] = index.at(roots[leaf]);
    return p;
}

Partition level_cut(const Dendrogram& dendrogram, unsigned level) {
    if (level >= 63 || (std::size_t{1} << level) > dendrogram.leaf_count()) {
        throw InputError("level_cut: 2^" + std::to_string(level) + " exceeds the leaf count");
    }
    return cut(dendrogram, std::size_t{1} << level);
}

namespace {

std::vector<double> node_heights(const Dendrogram& d) {
    std::vector<double> h(d.leaf_count() + d.merges.size(), 0.0);
    for (std::size_t i = 0; i < d.merges.size(); ++i) h[d.leaf_count() + i] = d.merges[i].height;
    return h;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string newick_label(const std::string& id) {
    if (id.find_first_of(" \t\n()[]':;,") == std::string::npos) return id;
    std::string out = "'";
    for (char c : id) {
        out += c;
        if (c == '\'') out += '\'';
    }
    return out + "'";
}

} // namespace

std::string dendrogram_to_json(const Dendrogram& d) {
    if (d.leaves.empty()) throw InputError("empty dendrogram");
    const std::size_t n = d.leaf_count();
    std::vector<nlohmann::json> nodes(n + d.merges.size());
    for (std::size_t i = 0; i < n; ++i) nodes[i] = {{"id", d.leaves[i]}, {"height", 0.0}};
    for (std::size_t i = 0; i < d.merges.size(); ++i) {
        const auto& m = d.merges[i];
        nodes[n + i] = {{"children", {std::move(nodes[m.left]), std::move(nodes[m.right])}}, {"height", m.height}};
    }
    return nodes.back().dump();
}

std::string dendrogram_to_newick(const Dendrogram& d) {
    if (d.leaves.empty()) throw InputError("empty dendrogram");
    const std::size_t n = d.leaf_count();
    const auto heights = node_heights(d);
    std::vector<std::string> text(n + d.merges.size());
    for (std::size_t i = 0; i < n; ++i) text[i] = newick_label(d.leaves[i]);
    for (std::size_t i = 0; i < d.merges.size(); ++i) {
        const auto& m = d.merges[i];
        const double h = m.height;
        text[n + i] = "(" + std::move(text[m.left]) + ":" + format_number(h - heights[m.left]) + "," +
                      std::move(text[m.right]) + ":" + format_number(h - heights[m.right]) + ")";
    }
    return text.back() + ";";
}

} // namespace afc
