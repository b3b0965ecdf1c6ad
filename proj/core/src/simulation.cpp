#include <afc/error.hpp>
#include <afc/simulation.hpp>

#include <json.hpp>

#include <algorithm>

namespace afc {

using nlohmann::json;

namespace {

bool all_synthetic(std::span<const ImageRecord> records) {
    return std::all_of(records.begin(), records.end(), [](const ImageRecord& r) { return r.attributes.has_value(); });
}

} // namespace

Partition coarse_partition(std::span<const ImageRecord> records) {
    return make_partition(all_synthetic(records) ? family_labels(records) : class_labels(records));
}

Partition fine_partition(std::span<const ImageRecord> records) {
    return make_partition(all_synthetic(records) ? shape_labels(records) : class_labels(records));
}

std::string SimulationReport::to_json() const {
    json rs = json::array();
    for (const auto& r : rounds)
        rs.push_back({{"round", r.round},
                      {"answers", r.answers},
                      {"final_loss", r.final_loss},
                      {"candidates", r.candidates},
                      {"kept", r.kept},
                      {"coarse_nmi", r.coarse_nmi}});
    json j{{"rounds", rs},
           {"total_answers", total_answers},
           {"pending_unanswered", pending_unanswered},
           {"trained", trained},
           {"converged", converged},
           {"coarse_nmi", coarse_nmi},
           {"levels", trained ? json::parse(levels.to_json()) : json::array()}};
    j["answers_to_target"] = answers_to_target ? json(*answers_to_target) : json(nullptr);
    return j.dump(2);
}

SimulationReport run_simulation(const Dataset& dataset, SessionConfig config, const SimulationOptions& options) {
    if (options.rounds < 0) throw InputError("rounds must be non-negative");
    if (options.batch_size < 1) throw InputError("batch size must be positive");
    config.selection.max_rounds = options.rounds;
    config.selection.batch_size = options.batch_size;
    config.initial_batch = options.batch_size;
    OracleConfig oracle = config.oracle.value_or(OracleConfig{});
    oracle.validate();

    Session session(dataset, config, options.state_dir);
    const auto records = session.images().records();
    const Partition coarse = coarse_partition(records);
    const std::size_t coarse_k = static_cast<std::size_t>(coarse.cluster_count());

    SimulationReport report;
    const std::string annotator = "oracle";
    while (options.rounds > 0 && session.state().phase == Phase::collecting) {
        while (auto q = session.next_question(annotator)) session.submit_answer(q->id, answer(*q, session.images(), oracle), annotator);
        SessionState st = session.advance_round();

        RoundMetrics m;
        m.round = st.round;
        m.answers = st.answers_logged;
        if (auto stats = session.last_round_stats()) {
            if (!stats->loss_history.empty()) m.final_loss = stats->loss_history.back();
            m.candidates = stats->candidates;
            m.kept = stats->kept;
        }
        if (st.trained) m.coarse_nmi = nmi(cut(session.dendrogram(), coarse_k), coarse);
        report.rounds.push_back(m);

        if (options.stop_at_coarse_nmi && m.coarse_nmi >= *options.stop_at_coarse_nmi) {
            report.answers_to_target = m.answers;
            break;
        }
    }

    SessionState final_state = session.state();
    report.total_answers = final_state.answers_logged;
    report.pending_unanswered = final_state.pending;
    report.trained = final_state.trained;
    report.converged = final_state.phase == Phase::converged;
    if (report.trained) {
        Dendrogram method = session.dendrogram();
        report.coarse_nmi = nmi(cut(method, coarse_k), coarse);
        report.levels = level_report(method, pixel_baseline(records), fine_partition(records), options.max_level);
        report.dendrogram_json = dendrogram_to_json(method);
        report.newick = dendrogram_to_newick(method);
    }
    return report;
}

} // namespace afc
