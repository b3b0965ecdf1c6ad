#include <afc/error.hpp>
#include <afc/selection.hpp>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

namespace afc {

std::string to_string(QuestionStatus status) {
    switch (status) {
    case QuestionStatus::pending: return "pending";
    case QuestionStatus::leased: return "leased";
    case QuestionStatus::answered: return "answered";
    case QuestionStatus::skipped: return "skipped";
    }
    return "unknown";
}

std::string to_string(Choice choice) { return choice == Choice::a ? "A" : "B"; }

Choice choice_from_string(const std::string& text) {
    if (text.size() == 1) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
        if (c == 'A') return Choice::a;
        if (c == 'B') return Choice::b;
    }
    throw InputError("choice must be \"A\" or \"B\", got \"" + text + "\"");
}

CanonicalTriple TripletQuery::canonical() const {
    return option_a < option_b ? CanonicalTriple{anchor, option_a, option_b}
                               : CanonicalTriple{anchor, option_b, option_a};
}

Triplet TripletQuery::to_triplet(Choice choice) const {
    return choice == Choice::a ? Triplet{anchor, option_a, option_b} : Triplet{anchor, option_b, option_a};
}

TripletQuery make_query(QuestionId id, ImageId anchor, ImageId x, ImageId y, PoolId pool_id) {
    if (anchor == x || anchor == y || x == y) throw InputError("question images must be pairwise distinct");
    if (y < x) std::swap(x, y);
    return TripletQuery{id, std::move(anchor), std::move(x), std::move(y), pool_id, QuestionStatus::pending};
}

bool Pool::contains(const ImageId& image) const {
    return std::find(member_ids.begin(), member_ids.end(), image) != member_ids.end();
}

void SelectionConfig::validate() const {
    if (!(exploit_fraction > 0.0 && exploit_fraction <= 1.0)) throw InputError("exploit_fraction must lie in (0, 1]");
    if (pool_size < 3) throw InputError("pool_size must be at least 3");
    if (max_candidates <= 0 || pools_per_round <= 0 || batch_size <= 0) {
        throw InputError("candidate, pool and batch counts must be positive");
    }
    if (max_rounds < 0) throw InputError("max_rounds must be non-negative");
    if (!(converged_fraction >= 0.0 && converged_fraction <= 1.0)) throw InputError("converged_fraction must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Bayes factor

namespace {

void check_tally(const NeighborTally& t) {
    if (t.k > t.n) throw InputError("tally has k > n");
}

__extension__ typedef unsigned __int128 u128;

u128 binomial(std::uint64_t n, std::uint64_t k) {
    k = std::min(k, n - k);
    u128 c = 1;
    for (std::uint64_t i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    return c;
}

} // namespace

double bayes_factor(const NeighborTally& tally) {
    check_tally(tally);
    const std::uint64_t n = tally.n, k = tally.k;
    if (n <= 30) {
        const double c = static_cast<double>(binomial(n, k));
        return std::ldexp(c * static_cast<double>(n + 1), -static_cast<int>(n));
    }
    // C(n, k) = C(n, n - k); fold so the result is exactly symmetric.
    const double nn = static_cast<double>(n), kk = static_cast<double>(std::min(k, n - k));
    const double log_bf = std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) - nn * std::log(2.0) +
                          std::log(nn + 1);
    return std::exp(log_bf);
}

Rational bayes_factor_rational(const NeighborTally& tally) {
    check_tally(tally);
    if (tally.n > 60) throw InputError("bayes_factor_rational supports n <= 60");
    auto num = binomial(tally.n, tally.k) * (tally.n + 1);
    std::uint64_t shift = tally.n;
    while (shift > 0 && (num & 1U) == 0) {
        num >>= 1U;
        --shift;
    }
    return Rational{static_cast<std::uint64_t>(num), std::uint64_t{1} << shift};
}

// ---------------------------------------------------------------------------
// Pools and candidates

Pool build_pool(const EmbeddingTable& embeddings, const ImageId& seed_image_id, int pool_size, PoolId id, int round) {
    const auto seed_it = embeddings.find(seed_image_id);
    if (seed_it == embeddings.end()) throw LookupError("unknown pool seed image '" + seed_image_id + "'");
    if (pool_size < 1 || static_cast<std::size_t>(pool_size) > embeddings.size()) {
        throw InputError("pool_size must lie in [1, number of images]");
    }
    std::vector<std::pair<double, const ImageId*>> others;
    others.reserve(embeddings.size());
    for (const auto& [other, e] : embeddings) {
        if (other == seed_image_id) continue;
        others.emplace_back(sq_distance(seed_it->second, e), &other);
    }
    const auto by_distance = [](const auto& l, const auto& r) {
        return l.first != r.first ? l.first < r.first : *l.second < *r.second;
    };
    const auto take = static_cast<std::size_t>(pool_size - 1);
    std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(take), others.end(), by_distance);

    Pool pool{id, seed_image_id, {seed_image_id}, round};
    for (std::size_t i = 0; i < take; ++i) pool.member_ids.push_back(*others[i].second);
    return pool;
}

std::vector<TripletQuery> generate_candidates(const Pool& pool, const std::set<CanonicalTriple>& already_asked,
                                              int max_candidates, std::uint64_t seed, QuestionId first_id) {
    const auto& m = pool.member_ids;
    if (m.size() < 3) throw InputError("pool needs at least 3 members to form a question");
    std::vector<CanonicalTriple> all;
    for (const auto& anchor : m) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (m[i] == anchor) continue;
            for (std::size_t j = i + 1; j < m.size(); ++j) {
                if (m[j] == anchor) continue;
                CanonicalTriple t = m[i] < m[j] ? CanonicalTriple{anchor, m[i], m[j]} : CanonicalTriple{anchor, m[j], m[i]};
                if (!already_asked.contains(t)) all.push_back(std::move(t));
            }
        }
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    if (max_candidates >= 0 && all.size() > static_cast<std::size_t>(max_candidates)) {
        all.resize(static_cast<std::size_t>(max_candidates));
    }
    std::vector<TripletQuery> out;
    out.reserve(all.size());
    for (auto& t : all) {
        out.push_back(TripletQuery{first_id++, std::move(t.anchor), std::move(t.first), std::move(t.second), pool.id,
                                   QuestionStatus::pending});
    }
    return out;
}

std::vector<TripletQuery> random_questions(const std::vector<ImageId>& images,
                                           const std::set<CanonicalTriple>& already_asked, int count,
                                           std::uint64_t seed, QuestionId first_id) {
    if (images.size() < 3) throw InputError("need at least 3 images to form a question");
    std::vector<ImageId> ids = images;
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    std::vector<TripletQuery> out;
    std::set<CanonicalTriple> chosen;
    const std::size_t n = ids.size();
    const std::size_t target = count > 0 ? static_cast<std::size_t>(count) : 0;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t attempts = 0;
    const std::size_t max_attempts = 64 * target + 1024;
    while (out.size() < target && attempts++ < max_attempts) {
        const std::size_t a = pick(rng), x = pick(rng), y = pick(rng);
        if (a == x || a == y || x == y) continue;
        TripletQuery q = make_query(0, ids[a], ids[x], ids[y], 0);
        auto key = q.canonical();
        if (already_asked.contains(key) || !chosen.insert(key).second) continue;
        q.id = first_id++;
        out.push_back(std::move(q));
    }
    if (out.size() < target) {
        // Nearly exhausted universe: enumerate what is left.
        Pool everything{0, ids.front(), ids, 0};
        std::set<CanonicalTriple> excluded = already_asked;
        excluded.insert(chosen.begin(), chosen.end());
        auto rest = generate_candidates(everything, excluded, static_cast<int>(target - out.size()), rng(), first_id);
        out.insert(out.end(), rest.begin(), rest.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Orientation and tallies

OrientedLabel orient_answer(const AnsweredQuestion& answer, const EmbeddingTable& embeddings) {
    const auto lookup = [&](const ImageId& id) -> const Embedding& {
        auto it = embeddings.find(id);
        if (it == embeddings.end()) throw LookupError("no embedding for image '" + id + "'");
        return it->second;
    };
    const auto& q = answer.question;
    const Embedding& anchor = lookup(q.anchor);
    const double da = sq_distance(anchor, lookup(q.option_a));
    const double db = sq_distance(anchor, lookup(q.option_b));
    if (da == db) return OrientedLabel::a1;
    const Choice predicted = da < db ? Choice::a : Choice::b;
    return predicted == answer.choice ? OrientedLabel::a0 : OrientedLabel::a1;
}

std::vector<OrientedAnswer> orient_answers(std::span<const AnsweredQuestion> answers,
                                           const EmbeddingTable& embeddings) {
    std::vector<OrientedAnswer> out;
    out.reserve(answers.size());
    for (const auto& a : answers) {
        out.push_back(OrientedAnswer{a.question.anchor, a.question.option_a, a.question.option_b,
                                     orient_answer(a, embeddings)});
    }
    return out;
}

NeighborTally neighbor_tally(const TripletQuery& q, std::span<const OrientedAnswer> answers, const PoolMap& pools) {
    const auto it = pools.find(q.pool_id);
    if (it == pools.end()) throw LookupError("unknown pool " + std::to_string(q.pool_id));
    const std::set<ImageId> members(it->second.member_ids.begin(), it->second.member_ids.end());
    NeighborTally t;
    for (const auto& a : answers) {
        if (members.contains(a.anchor) && members.contains(a.option_a) && members.contains(a.option_b)) {
            ++t.n;
            if (a.label == OrientedLabel::a0) ++t.k;
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Round selection

namespace {

std::vector<double> candidate_bayes_factors(std::span<const TripletQuery> candidates,
                                            std::span<const AnsweredQuestion> answers, const PoolMap& pools,
                                            const EmbeddingTable& embeddings) {
    const auto oriented = orient_answers(answers, embeddings);
    std::vector<double> bf;
    bf.reserve(candidates.size());
    std::map<PoolId, double> cache;
    for (const auto& q : candidates) {
        auto hit = cache.find(q.pool_id);
        if (hit == cache.end()) {
            hit = cache.emplace(q.pool_id, bayes_factor(neighbor_tally(q, oriented, pools))).first;
        }
        bf.push_back(hit->second);
    }
    return bf;
}

} // namespace

SelectionOutcome select_round(std::span<const TripletQuery> candidates, std::span<const AnsweredQuestion> answers,
                              const PoolMap& pools, const EmbeddingTable& embeddings, const SelectionConfig& config,
                              std::uint64_t seed) {
    config.validate();
    SelectionOutcome out;
    out.bayes_factors = candidate_bayes_factors(candidates, answers, pools, embeddings);

    std::vector<std::size_t> kept, dropped;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        (out.bayes_factors[i] > config.tau ? kept : dropped).push_back(i);
    }
    out.kept = kept.size();
    std::sort(kept.begin(), kept.end(), [&](std::size_t l, std::size_t r) {
        if (out.bayes_factors[l] != out.bayes_factors[r]) return out.bayes_factors[l] > out.bayes_factors[r];
        return candidates[l].id < candidates[r].id;
    });

    const auto batch = static_cast<std::size_t>(config.batch_size);
    const auto exploit = static_cast<std::size_t>(std::ceil(config.exploit_fraction * static_cast<double>(batch) - 1e-9));
    const std::size_t top = std::min({exploit, kept.size(), batch});
    for (std::size_t i = 0; i < top; ++i) out.selected.push_back(candidates[kept[i]]);

    std::mt19937_64 rng(seed);
    const auto fill_from = [&](std::vector<std::size_t> pool) {
        std::shuffle(pool.begin(), pool.end(), rng);
        for (std::size_t idx : pool) {
            if (out.selected.size() >= batch) break;
            out.selected.push_back(candidates[idx]);
        }
    };
    fill_from(std::vector<std::size_t>(kept.begin() + static_cast<std::ptrdiff_t>(top), kept.end()));
    fill_from(dropped);
    return out;
}

bool converged(std::span<const TripletQuery> candidates, std::span<const AnsweredQuestion> answers,
               const PoolMap& pools, const EmbeddingTable& embeddings, const SelectionConfig& config,
               int rounds_completed) {
    if (rounds_completed >= config.max_rounds) return true;
    if (candidates.empty()) return true;
    const auto bf = candidate_bayes_factors(candidates, answers, pools, embeddings);
    const auto kept = std::count_if(bf.begin(), bf.end(), [&](double v) { return v > config.tau; });
    return static_cast<double>(kept) < config.converged_fraction * static_cast<double>(candidates.size());
}

std::string round_report_json(int round, std::span<const TripletQuery> candidates, const SelectionOutcome& outcome) {
    static constexpr double edges[] = {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0};
    nlohmann::json hist = nlohmann::json::array();
    constexpr std::size_t bins = std::size(edges);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : outcome.bayes_factors) {
        std::size_t b = bins - 1;
        while (b > 0 && v < edges[b]) --b;
        ++counts[b];
    }
    for (std::size_t b = 0; b < bins; ++b) {
        nlohmann::json bin{{"lower", edges[b]}, {"count", counts[b]}};
        bin["upper"] = b + 1 < bins ? nlohmann::json(edges[b + 1]) : nlohmann::json(nullptr);
        hist.push_back(std::move(bin));
    }
    std::vector<QuestionId> ids;
    for (const auto& q : outcome.selected) ids.push_back(q.id);
    nlohmann::json j{{"round", round},
                     {"candidate_count", candidates.size()},
                     {"kept_count", outcome.kept},
                     {"bf_histogram", hist},
                     {"selected_ids", ids}};
    return j.dump(2);
}

} // namespace afc
