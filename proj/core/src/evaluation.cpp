#include <afc/error.hpp>
#include <afc/evaluation.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace afc {

double nmi(const Partition& u, const Partition& v, NmiNormalization norm) {
    if (u.assignment.size() != v.assignment.size()) throw InputError("nmi: partitions cover different leaf sets");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> pu, pv;
    auto vi = v.assignment.begin();
    for (const auto& [id, cu] : u.assignment) {
        if (vi->first != id) throw InputError("nmi: partitions cover different leaf sets");
        joint[{cu, vi->second}] += 1.0;
        pu[cu] += 1.0;
        pv[vi->second] += 1.0;
        ++vi;
    }
    const double n = static_cast<double>(u.assignment.size());
    if (n == 0) return 0.0;
    const auto entropy = [n](const std::map<int, double>& counts) {
        double h = 0.0;
        for (const auto& [_, c] : counts) h -= (c / n) * std::log(c / n);
        return h;
    };
    const double hu = entropy(pu), hv = entropy(pv);
    if (hu <= 0.0 || hv <= 0.0) return 0.0;
    double mi = 0.0;
    for (const auto& [cell, c] : joint) {
        mi += (c / n) * std::log((c * n) / (pu[cell.first] * pv[cell.second]));
    }
    const double denom = norm == NmiNormalization::geometric ? std::sqrt(hu * hv) : 0.5 * (hu + hv);
    return std::clamp(mi / denom, 0.0, 1.0);
}

Dendrogram pixel_baseline(std::span<const ImageRecord> images) {
    if (images.empty()) throw InputError("pixel_baseline: no images");
    std::vector<ImageId> ids;
    std::vector<std::vector<double>> points;
    for (const auto& img : images) {
        if (!(img.shape == images.front().shape) || img.pixels.size() != img.shape.size()) {
            throw InputError("pixel_baseline: images differ in shape");
        }
        ids.push_back(img.id);
        std::vector<double> p(img.pixels.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.pixels[i] / 255.0;
        points.push_back(std::move(p));
    }
    // leaves in ascending id order, as for embedding tables
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    std::vector<ImageId> sorted_ids;
    std::vector<std::vector<double>> sorted_points;
    for (std::size_t i : order) {
        sorted_ids.push_back(std::move(ids[i]));
        sorted_points.push_back(std::move(points[i]));
    }
    return complete_linkage(sorted_ids, sorted_points);
}

LevelReport level_report(const Dendrogram& method, const Dendrogram& baseline, const Partition& true_labels,
                         unsigned max_level, NmiNormalization norm) {
    LevelReport r;
    for (unsigned level = 0; level <= max_level; ++level) {
        const Partition pm = level_cut(method, level);
        const Partition pb = level_cut(baseline, level);
        r.rows.push_back(LevelRow{level, std::size_t{1} << level, nmi(pb, true_labels, norm), nmi(pm, true_labels, norm)});
    }
    return r;
}

std::string LevelReport::to_table() const {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof line, "%-6s %-9s %-9s %-9s\n", "Level", "Clusters", "Baseline", "Method");
    os << line;
    for (const auto& row : rows) {
        std::snprintf(line, sizeof line, "%-6u %-9zu %-9.3f %-9.3f\n", row.level, row.cluster_count, row.nmi_baseline,
                      row.nmi_method);
        os << line;
    }
    return os.str();
}

std::string LevelReport::to_csv() const {
    std::ostringstream os;
    os << "level,clusters,baseline_nmi,method_nmi\n";
    char line[128];
    for (const auto& row : rows) {
        std::snprintf(line, sizeof line, "%u,%zu,%.6f,%.6f\n", row.level, row.cluster_count, row.nmi_baseline,
                      row.nmi_method);
        os << line;
    }
    return os.str();
}

std::string LevelReport::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& row : rows) {
        j.push_back({{"level", row.level},
                     {"clusters", row.cluster_count},
                     {"baseline_nmi", row.nmi_baseline},
                     {"method_nmi", row.nmi_method}});
    }
    return j.dump(2);
}

} // namespace afc
