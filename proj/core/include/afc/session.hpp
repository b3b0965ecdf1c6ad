#pragma once

// Annotation session: issues 2AFC questions, records answers, and runs the
// answer -> retrain -> reselect loop one synchronous round at a time.
//
// On-disk state (when a state directory is given):
//   config.json              session configuration, including every seed
//   answers.jsonl            append-only answer log, one JSON record per line
//   rounds/round_NNNN.json   questions issued in round N, pools, selection report
//   checkpoints/round_NNNN.{json,params}
//                            model that selected round N's questions
//
// A round file is written only after its checkpoint, so the newest round file
// always has a matching checkpoint. Resuming replays these files; leases are
// not persisted and revert to pending.

#include <afc/checkpoint.hpp>
#include <afc/clustering.hpp>
#include <afc/dataset.hpp>
#include <afc/evaluation.hpp>
#include <afc/model.hpp>
#include <afc/oracle.hpp>
#include <afc/selection.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace afc {

enum class Phase { collecting, training, selecting, converged };
std::string to_string(Phase phase);

struct AnswerRecord {
    QuestionId question_id = 0;
    Choice choice = Choice::a;
    std::string annotator_id;
    std::int64_t timestamp_ms = 0;
    int round = 0;

    friend bool operator==(const AnswerRecord&, const AnswerRecord&) = default;
};

std::string answer_to_json_line(const AnswerRecord& record);
AnswerRecord answer_from_json_line(const std::string& line);

struct SessionConfig {
    TrainingConfig training;
    SelectionConfig selection;
    std::optional<OracleConfig> oracle;
    int embedding_dim = 8;
    bool normalize_output = true;
    std::uint64_t model_seed = 0;
    /// Size of the random initialization batch.
    int initial_batch = 105;
    std::chrono::seconds lease_duration{120};
    /// A round may be closed with open questions once this much time has passed; 0 disables.
    std::chrono::seconds round_deadline{0};
    std::string prompt = "Which object is more similar to the anchor object?";

    void validate() const;
};

struct SessionState {
    int round = 0;
    Phase phase = Phase::collecting;
    std::size_t pending = 0;
    std::size_t leased = 0;
    std::size_t answered = 0;
    std::size_t skipped = 0;
    std::size_t answers_logged = 0;
    int checkpoint_round = 0;
    bool trained = false;
    std::vector<QuestionId> pending_ids;

    friend bool operator==(const SessionState&, const SessionState&) = default;
};

std::string session_state_json(const SessionState& state);

struct SubmitResult {
    /// False when the identical (question, annotator, choice) was already logged.
    bool recorded = false;
    Triplet triplet;
};

/// Selection statistics of one advance_round() call.
struct RoundStats {
    int round = 0;
    std::size_t candidates = 0;
    std::size_t kept = 0;
    std::vector<double> loss_history;
    bool converged = false;
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

class Session {
public:
    /// Starts a new session with a random initialization batch. An empty
    /// `state_dir` keeps everything in memory.
    Session(Dataset dataset, SessionConfig config, std::filesystem::path state_dir = {}, Clock clock = {});

    /// Rebuilds a session from its state directory.
    static std::unique_ptr<Session> resume(Dataset dataset, const std::filesystem::path& state_dir, Clock clock = {});

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;
    ~Session();

    [[nodiscard]] SessionState state() const;

    /// Leases the next pending question of the round to `annotator_id`. An annotator
    /// holding an unexpired lease gets the same question back. Empty when the batch is exhausted.
    std::optional<TripletQuery> next_question(const std::string& annotator_id);

    SubmitResult submit_answer(QuestionId question_id, Choice choice, const std::string& annotator_id);

    /// Closes the round (all answered, deadline passed, or `force`), retrains on every
    /// logged answer, and selects the next batch or converges.
    SessionState advance_round(bool force = false);

    /// First half of advance_round: validates and moves to the training phase.
    void begin_advance(bool force = false);
    /// Second half: training, selection and persistence.
    SessionState finish_advance();

    /// Complete-linkage dendrogram of all images under the latest trained model.
    [[nodiscard]] Dendrogram dendrogram() const;
    [[nodiscard]] std::string dendrogram_json() const;
    /// Level report against class labels (shape for synthetic data).
    [[nodiscard]] LevelReport report(unsigned max_level) const;

    [[nodiscard]] std::vector<TripletQuery> current_batch() const;
    [[nodiscard]] std::optional<TripletQuery> question(QuestionId id) const;
    [[nodiscard]] std::vector<AnswerRecord> answers() const;
    [[nodiscard]] std::vector<Triplet> training_triplets() const;
    [[nodiscard]] std::shared_ptr<const EmbeddingModel> model() const;
    [[nodiscard]] std::optional<RoundStats> last_round_stats() const;
    [[nodiscard]] const ImageStore& images() const { return images_; }
    [[nodiscard]] const Dataset& dataset() const { return dataset_; }
    [[nodiscard]] const SessionConfig& config() const { return config_; }

private:
    struct Resume {};
    Session(Resume, Dataset dataset, SessionConfig config, std::filesystem::path state_dir, Clock clock);

    struct Lease {
        std::string annotator;
        std::chrono::system_clock::time_point expiry;
    };

    [[nodiscard]] std::chrono::system_clock::time_point now() const;
    void expire_leases_locked();
    [[nodiscard]] SessionState state_locked() const;
    void write_round_file(int round, const std::vector<TripletQuery>& batch, const std::vector<Pool>& pools,
                          const std::string& report_json, bool converged) const;
    void open_answer_log();
    std::filesystem::path checkpoint_path(int round) const;
    void install_batch_locked(int round, std::vector<TripletQuery> batch);

    Dataset dataset_;
    ImageStore images_;
    std::vector<ImageId> sorted_ids_;
    SessionConfig config_;
    std::filesystem::path state_dir_;
    Clock clock_;

    mutable std::mutex mutex_;
    int round_ = 0;
    Phase phase_ = Phase::collecting;
    std::map<QuestionId, TripletQuery> questions_;
    std::map<QuestionId, int> question_round_;
    std::vector<QuestionId> batch_;
    std::set<CanonicalTriple> asked_;
    std::vector<AnswerRecord> answers_;
    std::set<std::tuple<QuestionId, std::string, Choice>> answer_keys_;
    std::map<QuestionId, Lease> leases_;
    QuestionId next_question_id_ = 0;
    std::chrono::system_clock::time_point round_opened_;
    std::shared_ptr<const EmbeddingModel> model_;
    int checkpoint_round_ = 0;
    bool trained_ = false;
    std::optional<RoundStats> last_stats_;
    std::ofstream answer_log_;

    mutable std::mutex cache_mutex_;
    mutable std::optional<std::pair<int, Dendrogram>> dendrogram_cache_;
    mutable std::optional<Dendrogram> baseline_cache_;
};

} // namespace afc
