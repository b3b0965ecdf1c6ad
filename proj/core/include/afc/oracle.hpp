#pragma once

// Simulated annotator. Answers "which option is more similar to the anchor?"
// from ground-truth attributes (synthetic shapes) or class labels (ingested data).

#include <afc/image.hpp>
#include <afc/selection.hpp>

#include <cstdint>

namespace afc {

struct OracleConfig {
    double w_shape = 4.0;
    double w_color = 2.0;
    double w_thickness = 1.0;
    /// Probability of inverting the answer.
    double p_flip = 0.0;
    std::uint64_t seed = 0;
    /// Weight of label disagreement for labelled records; must exceed the maximum
    /// normalized pixel distance (1) so the label always dominates.
    double w_label = 2.0;

    void validate() const;
};

/// w_shape * s + w_color * c + w_thickness * t with s in {0, 1, 2} (same shape,
/// same family, different family), c = colour mismatch, t = |thickness delta| / 2.
double semantic_distance(const ShapeAttributes& a, const ShapeAttributes& b, const OracleConfig& config);

/// Attribute distance when both records carry attributes; otherwise
/// w_label * [labels differ] + mean squared pixel difference in [0, 1].
double semantic_distance(const ImageRecord& a, const ImageRecord& b, const OracleConfig& config);

/// Picks the option semantically closer to the anchor. Exact ties are settled by a
/// fair coin and answers flip with probability p_flip; both draws are a pure
/// function of (seed, question id, anchor, option pair), independent of A/B order.
Choice answer(const TripletQuery& q, const ImageStore& records, const OracleConfig& config);

} // namespace afc
