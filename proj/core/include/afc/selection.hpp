#pragma once

// Pool-based candidate generation and Bayes-factor uncertainty filtering.
//
// For a candidate question q, the answered questions whose three images all
// lie inside q's pool form its neighbourhood. Each neighbouring answer is
// oriented against the current model: a0 when the annotator picked the option
// the model places closer to the anchor, a1 otherwise. With n neighbouring
// answers of which k are a0, the Bayes factor
//
//     BF = P(data | coin flip) / P(data | Theta ~ U[0, 1]) = C(n, k) 0.5^n (n + 1)
//
// exceeds 1 when the local answers look like guessing relative to the model.
// Questions with BF > tau are kept and the highest-BF ones are asked next.

#include <afc/image.hpp>
#include <afc/model.hpp>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace afc {

using QuestionId = std::uint64_t;
using PoolId = std::uint64_t;

enum class QuestionStatus { pending, leased, answered, skipped };
std::string to_string(QuestionStatus status);

/// The annotator's forced choice: option A or option B is closer to the anchor.
enum class Choice { a, b };
std::string to_string(Choice choice);
/// Accepts "A"/"B" (case-insensitive); anything else is an InputError.
Choice choice_from_string(const std::string& text);

struct CanonicalTriple {
    ImageId anchor;
    ImageId first;
    ImageId second;

    auto operator<=>(const CanonicalTriple&) const = default;
};

struct TripletQuery {
    QuestionId id = 0;
    ImageId anchor;
    ImageId option_a;
    ImageId option_b;
    PoolId pool_id = 0;
    QuestionStatus status = QuestionStatus::pending;

    /// Anchor plus the option pair in ascending identifier order.
    [[nodiscard]] CanonicalTriple canonical() const;
    /// The 2AFC outcome as a training triplet: the chosen option is the positive.
    [[nodiscard]] Triplet to_triplet(Choice choice) const;

    friend bool operator==(const TripletQuery&, const TripletQuery&) = default;
};

/// Builds a query with option_a < option_b; throws InputError unless the ids are pairwise distinct.
TripletQuery make_query(QuestionId id, ImageId anchor, ImageId x, ImageId y, PoolId pool_id);

struct Pool {
    PoolId id = 0;
    ImageId seed_image_id;
    std::vector<ImageId> member_ids;
    int created_at_round = 0;

    [[nodiscard]] bool contains(const ImageId& image) const;
};

using PoolMap = std::map<PoolId, Pool>;

struct NeighborTally {
    std::uint64_t n = 0;
    std::uint64_t k = 0;

    friend bool operator==(const NeighborTally&, const NeighborTally&) = default;
};

enum class SelectionStrategy { bayes_factor, random };

struct SelectionConfig {
    double tau = 0.75;
    int pool_size = 12;
    /// Candidate questions generated per round, across all pools.
    int max_candidates = 500;
    int pools_per_round = 20;
    int batch_size = 105;
    double exploit_fraction = 0.8;
    /// converged() fires when fewer than this fraction of candidates pass the BF filter.
    double converged_fraction = 0.05;
    /// Number of question batches (including the random initial batch) before the loop stops.
    int max_rounds = 8;
    SelectionStrategy strategy = SelectionStrategy::bayes_factor;
    std::uint64_t seed = 0;

    void validate() const;
};

/// C(n, k) 0.5^n (n + 1). Exact in double for n <= 30, log-space beyond.
double bayes_factor(const NeighborTally& tally);

/// The same quantity as a reduced fraction; n <= 60.
struct Rational {
    std::uint64_t numerator = 0;
    std::uint64_t denominator = 1;
    friend bool operator==(const Rational&, const Rational&) = default;
};
Rational bayes_factor_rational(const NeighborTally& tally);

/// Seed plus its pool_size - 1 nearest neighbours by squared distance, ties by id.
Pool build_pool(const EmbeddingTable& embeddings, const ImageId& seed_image_id, int pool_size, PoolId id = 0,
                int round = 0);

/// Up to max_candidates distinct canonical questions from the pool, sampled
/// uniformly without replacement, skipping `already_asked`. Ids are assigned
/// consecutively from `first_id` in output order.
std::vector<TripletQuery> generate_candidates(const Pool& pool, const std::set<CanonicalTriple>& already_asked,
                                              int max_candidates, std::uint64_t seed, QuestionId first_id = 0);

/// Uniformly random canonical questions over the whole image set, skipping `already_asked`.
std::vector<TripletQuery> random_questions(const std::vector<ImageId>& images,
                                           const std::set<CanonicalTriple>& already_asked, int count,
                                           std::uint64_t seed, QuestionId first_id = 0);

/// An answered question, as fed to the selection stage.
struct AnsweredQuestion {
    TripletQuery question;
    Choice choice = Choice::a;
};

enum class OrientedLabel { a0, a1 };

/// a0 iff the annotator chose the option strictly closer to the anchor under `embeddings`.
OrientedLabel orient_answer(const AnsweredQuestion& answer, const EmbeddingTable& embeddings);

struct OrientedAnswer {
    ImageId anchor;
    ImageId option_a;
    ImageId option_b;
    OrientedLabel label = OrientedLabel::a0;
};

std::vector<OrientedAnswer> orient_answers(std::span<const AnsweredQuestion> answers,
                                           const EmbeddingTable& embeddings);

/// Counts oriented answers whose three images all lie in q's pool.
NeighborTally neighbor_tally(const TripletQuery& q, std::span<const OrientedAnswer> answers, const PoolMap& pools);

struct SelectionOutcome {
    std::vector<TripletQuery> selected;
    /// Bayes factor of every candidate, aligned with the input candidate list.
    std::vector<double> bayes_factors;
    std::size_t kept = 0;
};

/// Keeps candidates with BF > tau, takes ceil(exploit_fraction * batch_size) of the
/// highest BF (ties by id) and fills the rest of the batch at random, first from the
/// remaining kept candidates and then from the filtered-out ones.
SelectionOutcome select_round(std::span<const TripletQuery> candidates, std::span<const AnsweredQuestion> answers,
                              const PoolMap& pools, const EmbeddingTable& embeddings, const SelectionConfig& config,
                              std::uint64_t seed);

/// Fraction of candidates with BF > tau below config.converged_fraction, or the cap reached.
bool converged(std::span<const TripletQuery> candidates, std::span<const AnsweredQuestion> answers,
               const PoolMap& pools, const EmbeddingTable& embeddings, const SelectionConfig& config,
               int rounds_completed);

/// JSON round report: round, candidate and kept counts, BF histogram, selected ids.
std::string round_report_json(int round, std::span<const TripletQuery> candidates, const SelectionOutcome& outcome);

} // namespace afc
