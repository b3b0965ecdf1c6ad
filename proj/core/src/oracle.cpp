#include <afc/error.hpp>
#include <afc/oracle.hpp>
#include <afc/seeding.hpp>

#include <cmath>
#include <string>

namespace afc {

void OracleConfig::validate() const {
    if (w_shape < 0 || w_color < 0 || w_thickness < 0) throw InputError("oracle weights must be non-negative");
    if (!(w_shape > 0 || w_color > 0 || w_thickness > 0)) throw InputError("at least one oracle weight must be positive");
    if (!(p_flip >= 0.0 && p_flip < 0.5)) throw InputError("p_flip must lie in [0, 0.5)");
    if (!(w_label > 1.0)) throw InputError("w_label must exceed 1");
}

double semantic_distance(const ShapeAttributes& a, const ShapeAttributes& b, const OracleConfig& config) {
    const double s = a.family != b.family ? 2.0 : (a.variant != b.variant ? 1.0 : 0.0);
    const double c = a.color != b.color ? 1.0 : 0.0;
    const double t = std::abs(a.thickness - b.thickness) / 2.0;
    return config.w_shape * s + config.w_color * c + config.w_thickness * t;
}

double semantic_distance(const ImageRecord& a, const ImageRecord& b, const OracleConfig& config) {
    if (a.attributes && b.attributes) return semantic_distance(*a.attributes, *b.attributes, config);
    if (!a.label || !b.label) {
        throw InputError("oracle needs attributes or labels on '" + a.id + "' and '" + b.id + "'");
    }
    if (a.pixels.size() != b.pixels.size()) throw InputError("oracle: images differ in shape");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = (static_cast<double>(a.pixels[i]) - b.pixels[i]) / 255.0;
        sq += d * d;
    }
    const double pixel = a.pixels.empty() ? 0.0 : sq / static_cast<double>(a.pixels.size());
    return (*a.label != *b.label ? config.w_label : 0.0) + pixel;
}

namespace {

double unit_draw(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

// FNV-1a, so answers do not depend on the standard library's string hash.
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

} // namespace

Choice answer(const TripletQuery& q, const ImageStore& records, const OracleConfig& config) {
    const ImageRecord& anchor = records.at(q.anchor);
    const ImageRecord& a = records.at(q.option_a);
    const ImageRecord& b = records.at(q.option_b);
    const double da = semantic_distance(anchor, a, config);
    const double db = semantic_distance(anchor, b, config);

    // Key the draws on the unordered option pair so swapping A and B is harmless.
    const auto& lo = q.option_a < q.option_b ? q.option_a : q.option_b;
    const auto& hi = q.option_a < q.option_b ? q.option_b : q.option_a;
    const std::uint64_t key = derive_seed(config.seed, {q.id, fnv1a(q.anchor), fnv1a(lo), fnv1a(hi)});

    const ImageId* chosen = nullptr;
    if (da < db) {
        chosen = &q.option_a;
    } else if (db < da) {
        chosen = &q.option_b;
    } else {
        chosen = unit_draw(mix64(key ^ 0x746965ULL)) < 0.5 ? &lo : &hi;
    }
    if (config.p_flip > 0.0 && unit_draw(mix64(key ^ 0x666c6970ULL)) < config.p_flip) {
        chosen = *chosen == q.option_a ? &q.option_b : &q.option_a;
    }
    return *chosen == q.option_a ? Choice::a : Choice::b;
}

} // namespace afc
