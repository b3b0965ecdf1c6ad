#include <afc/config.hpp>
#include <afc/error.hpp>
#include <afc/seeding.hpp>
#include <afc/session.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace afc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::int64_t to_ms(std::chrono::system_clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

std::chrono::system_clock::time_point from_ms(std::int64_t ms) {
    return std::chrono::system_clock::time_point(std::chrono::milliseconds(ms));
}

std::string round_name(int round) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "round_%04d", round);
    return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LookupError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json query_to_json(const TripletQuery& q) {
    return {{"id", q.id}, {"anchor", q.anchor}, {"option_a", q.option_a}, {"option_b", q.option_b},
            {"pool_id", q.pool_id}};
}

TripletQuery query_from_json(const json& j) {
    TripletQuery q;
    q.id = j.at("id").get<QuestionId>();
    q.anchor = j.at("anchor").get<std::string>();
    q.option_a = j.at("option_a").get<std::string>();
    q.option_b = j.at("option_b").get<std::string>();
    q.pool_id = j.at("pool_id").get<PoolId>();
    return q;
}

EmbeddingModel initial_model(const Dataset& dataset, const SessionConfig& config) {
    const ImageShape& s = dataset.manifest.shape;
    auto model = EmbeddingModel::standard(TensorShape{s.channels, s.height, s.width, false}, config.embedding_dim,
                                          config.normalize_output);
    model.initialize(config.model_seed);
    return model;
}

} // namespace

std::string to_string(Phase phase) {
    switch (phase) {
    case Phase::collecting: return "collecting";
    case Phase::training: return "training";
    case Phase::selecting: return "selecting";
    case Phase::converged: return "converged";
    }
    return "unknown";
}

std::string answer_to_json_line(const AnswerRecord& r) {
    json j{{"question_id", r.question_id},
           {"choice", to_string(r.choice)},
           {"annotator_id", r.annotator_id},
           {"timestamp_ms", r.timestamp_ms},
           {"round", r.round}};
    return j.dump();
}

AnswerRecord answer_from_json_line(const std::string& line) {
    try {
        json j = json::parse(line);
        AnswerRecord r;
        r.question_id = j.at("question_id").get<QuestionId>();
        r.choice = choice_from_string(j.at("choice").get<std::string>());
        r.annotator_id = j.at("annotator_id").get<std::string>();
        r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        r.round = j.at("round").get<int>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed answer record: ") + e.what());
    }
}

void SessionConfig::validate() const {
    training.validate();
    selection.validate();
    if (oracle) oracle->validate();
    if (embedding_dim < 1) throw InputError("embedding_dim must be positive");
    if (initial_batch < 0) throw InputError("initial_batch must be non-negative");
    if (lease_duration.count() <= 0) throw InputError("lease_duration must be positive");
    if (round_deadline.count() < 0) throw InputError("round_deadline must be non-negative");
}

std::string session_state_json(const SessionState& s) {
    json j{{"round", s.round},
           {"phase", to_string(s.phase)},
           {"pending", s.pending},
           {"leased", s.leased},
           {"answered", s.answered},
           {"skipped", s.skipped},
           {"answers_logged", s.answers_logged},
           {"checkpoint_round", s.checkpoint_round},
           {"trained", s.trained},
           {"pending_ids", s.pending_ids}};
    return j.dump();
}

// --- construction ------------------------------------------------------------

Session::Session(Resume, Dataset dataset, SessionConfig config, fs::path state_dir, Clock clock)
    : dataset_(std::move(dataset)), images_(dataset_.records), sorted_ids_(images_.sorted_ids()),
      config_(std::move(config)), state_dir_(std::move(state_dir)), clock_(std::move(clock)) {
    config_.validate();
    if (sorted_ids_.size() < 3) throw InputError("a session needs at least three images");
}

Session::Session(Dataset dataset, SessionConfig config, fs::path state_dir, Clock clock)
    : Session(Resume{}, std::move(dataset), std::move(config), std::move(state_dir), std::move(clock)) {
    if (!state_dir_.empty()) {
        if (fs::exists(state_dir_ / "config.json"))
            throw StateError("state directory already holds a session: " + state_dir_.string());
        fs::create_directories(state_dir_ / "rounds");
        fs::create_directories(state_dir_ / "checkpoints");
        write_file_atomic(state_dir_ / "config.json", session_config_to_json(config_));
    }

    auto model = initial_model(dataset_, config_);
    if (!state_dir_.empty()) save_checkpoint(checkpoint_path(0), model, {config_.model_seed, 0, false});
    model_ = std::make_shared<const EmbeddingModel>(std::move(model));

    auto batch = random_questions(sorted_ids_, {}, config_.initial_batch, derive_seed(config_.selection.seed, {0}), 0);
    next_question_id_ = batch.size();
    round_opened_ = now();
    bool done = config_.selection.max_rounds == 0;
    if (done) batch.clear();
    if (!state_dir_.empty()) write_round_file(0, batch, {}, "{}", done);
    install_batch_locked(0, std::move(batch));
    if (done) phase_ = Phase::converged;
    open_answer_log();
}

std::unique_ptr<Session> Session::resume(Dataset dataset, const fs::path& state_dir, Clock clock) {
    if (!fs::exists(state_dir / "config.json")) throw LookupError("no session in " + state_dir.string());
    SessionConfig config = load_session_config(state_dir / "config.json");
    std::unique_ptr<Session> s(new Session(Resume{}, std::move(dataset), std::move(config), state_dir, std::move(clock)));

    // Round files, in order, define the issued questions.
    int last = -1;
    bool converged_flag = false;
    for (int r = 0;; ++r) {
        fs::path p = state_dir / "rounds" / (round_name(r) + ".json");
        if (!fs::exists(p)) break;
        json j;
        try {
            j = json::parse(read_file(p));
        } catch (const json::exception& e) {
            throw FormatError("malformed round file " + p.string() + ": " + e.what());
        }
        std::vector<TripletQuery> batch;
        for (const auto& q : j.at("questions")) batch.push_back(query_from_json(q));
        for (const auto& q : batch) {
            if (!s->images_.contains(q.anchor) || !s->images_.contains(q.option_a) ||
                !s->images_.contains(q.option_b))
                throw ConsistencyError("round file references images missing from the dataset");
        }
        s->next_question_id_ = j.at("next_question_id").get<QuestionId>();
        s->round_opened_ = from_ms(j.at("opened_at_ms").get<std::int64_t>());
        converged_flag = j.at("converged").get<bool>();
        // Questions of earlier rounds that were never answered were skipped when their round closed.
        for (QuestionId id : s->batch_)
            if (s->questions_[id].status != QuestionStatus::answered) s->questions_[id].status = QuestionStatus::skipped;
        s->install_batch_locked(r, std::move(batch));
        if (j.contains("stats")) {
            const json& st = j["stats"];
            s->last_stats_ = RoundStats{r, st.at("candidates").get<std::size_t>(), st.at("kept").get<std::size_t>(),
                                        st.at("loss_history").get<std::vector<double>>(), converged_flag};
        }
        last = r;
    }
    if (last < 0) throw ConsistencyError("state directory has no round files");
    if (converged_flag) s->phase_ = Phase::converged;

    Checkpoint ck = load_checkpoint(s->checkpoint_path(last));
    s->model_ = std::make_shared<const EmbeddingModel>(std::move(ck.model));
    s->checkpoint_round_ = last;
    s->trained_ = ck.info.trained;

    // Answer log; a torn final line from an interrupted write is dropped.
    fs::path log = state_dir / "answers.jsonl";
    if (fs::exists(log)) {
        std::string content = read_file(log);
        std::size_t keep = content.rfind('\n');
        keep = keep == std::string::npos ? 0 : keep + 1;
        if (keep != content.size()) {
            content.resize(keep);
            fs::resize_file(log, keep);
        }
        std::istringstream lines(content);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            AnswerRecord rec = answer_from_json_line(line);
            auto it = s->questions_.find(rec.question_id);
            if (it == s->questions_.end()) throw ConsistencyError("answer log references an unknown question");
            s->answer_keys_.emplace(rec.question_id, rec.annotator_id, rec.choice);
            it->second.status = QuestionStatus::answered;
            s->answers_.push_back(std::move(rec));
        }
    }
    s->open_answer_log();
    return s;
}

Session::~Session() = default;

void Session::install_batch_locked(int round, std::vector<TripletQuery> batch) {
    round_ = round;
    batch_.clear();
    for (auto& q : batch) {
        q.status = QuestionStatus::pending;
        asked_.insert(q.canonical());
        question_round_[q.id] = round;
        batch_.push_back(q.id);
        questions_[q.id] = std::move(q);
    }
}

void Session::open_answer_log() {
    if (state_dir_.empty()) return;
    answer_log_.open(state_dir_ / "answers.jsonl", std::ios::app | std::ios::binary);
    if (!answer_log_) throw Error("cannot open answer log in " + state_dir_.string());
}

fs::path Session::checkpoint_path(int round) const {
    return state_dir_ / "checkpoints" / (round_name(round) + ".json");
}

std::chrono::system_clock::time_point Session::now() const {
    return clock_ ? clock_() : std::chrono::system_clock::now();
}

void Session::write_round_file(int round, const std::vector<TripletQuery>& batch, const std::vector<Pool>& pools,
                               const std::string& report_json, bool converged) const {
    json qs = json::array();
    for (const auto& q : batch) qs.push_back(query_to_json(q));
    json ps = json::array();
    for (const auto& p : pools)
        ps.push_back({{"id", p.id}, {"seed_image_id", p.seed_image_id}, {"member_ids", p.member_ids},
                      {"created_at_round", p.created_at_round}});
    json j{{"round", round},
           {"opened_at_ms", to_ms(round_opened_)},
           {"next_question_id", next_question_id_},
           {"converged", converged},
           {"questions", qs},
           {"pools", ps},
           {"selection", json::parse(report_json)}};
    if (last_stats_ && last_stats_->round == round)
        j["stats"] = {{"candidates", last_stats_->candidates},
                      {"kept", last_stats_->kept},
                      {"loss_history", last_stats_->loss_history}};
    write_file_atomic(state_dir_ / "rounds" / (round_name(round) + ".json"), j.dump(1));
}

// --- queries ----------------------------------------------------------------

SessionState Session::state_locked() const {
    SessionState s;
    s.round = round_;
    s.phase = phase_;
    for (QuestionId id : batch_) {
        switch (questions_.at(id).status) {
        case QuestionStatus::pending:
            ++s.pending;
            s.pending_ids.push_back(id);
            break;
        case QuestionStatus::leased: ++s.leased; break;
        case QuestionStatus::answered: ++s.answered; break;
        case QuestionStatus::skipped: ++s.skipped; break;
        }
    }
    s.answers_logged = answers_.size();
    s.checkpoint_round = checkpoint_round_;
    s.trained = trained_;
    return s;
}

SessionState Session::state() const {
    std::lock_guard lock(mutex_);
    const_cast<Session*>(this)->expire_leases_locked();
    return state_locked();
}

void Session::expire_leases_locked() {
    auto t = now();
    for (auto it = leases_.begin(); it != leases_.end();) {
        if (it->second.expiry <= t) {
            auto& q = questions_.at(it->first);
            if (q.status == QuestionStatus::leased) q.status = QuestionStatus::pending;
            it = leases_.erase(it);
        } else {
            ++it;
        }
    }
}

std::vector<TripletQuery> Session::current_batch() const {
    std::lock_guard lock(mutex_);
    std::vector<TripletQuery> out;
    for (QuestionId id : batch_) out.push_back(questions_.at(id));
    return out;
}

std::optional<TripletQuery> Session::question(QuestionId id) const {
    std::lock_guard lock(mutex_);
    auto it = questions_.find(id);
    if (it == questions_.end()) return std::nullopt;
    return it->second;
}

std::vector<AnswerRecord> Session::answers() const {
    std::lock_guard lock(mutex_);
    return answers_;
}

std::vector<Triplet> Session::training_triplets() const {
    std::lock_guard lock(mutex_);
    std::vector<Triplet> out;
    out.reserve(answers_.size());
    for (const auto& a : answers_) out.push_back(questions_.at(a.question_id).to_triplet(a.choice));
    return out;
}

std::shared_ptr<const EmbeddingModel> Session::model() const {
    std::lock_guard lock(mutex_);
    return model_;
}

std::optional<RoundStats> Session::last_round_stats() const {
    std::lock_guard lock(mutex_);
    return last_stats_;
}

// --- annotation ---------------------------------------------------------------

std::optional<TripletQuery> Session::next_question(const std::string& annotator_id) {
    if (annotator_id.empty()) throw InputError("annotator id must not be empty");
    std::lock_guard lock(mutex_);
    if (phase_ != Phase::collecting) throw StateError("session is " + to_string(phase_) + ", not collecting");
    expire_leases_locked();
    for (const auto& [id, lease] : leases_)
        if (lease.annotator == annotator_id) return questions_.at(id);
    for (QuestionId id : batch_) {
        auto& q = questions_.at(id);
        if (q.status != QuestionStatus::pending) continue;
        q.status = QuestionStatus::leased;
        leases_[id] = Lease{annotator_id, now() + config_.lease_duration};
        return q;
    }
    return std::nullopt;
}

SubmitResult Session::submit_answer(QuestionId question_id, Choice choice, const std::string& annotator_id) {
    if (annotator_id.empty()) throw InputError("annotator id must not be empty");
    std::lock_guard lock(mutex_);
    auto it = questions_.find(question_id);
    if (it == questions_.end()) throw LookupError("unknown question " + std::to_string(question_id));
    TripletQuery& q = it->second;
    if (answer_keys_.contains({question_id, annotator_id, choice})) return {false, q.to_triplet(choice)};
    if (phase_ != Phase::collecting) throw StateError("session is " + to_string(phase_) + ", not collecting");
    if (question_round_.at(question_id) != round_)
        throw StateError("question " + std::to_string(question_id) + " belongs to a closed round");

    AnswerRecord rec{question_id, choice, annotator_id, to_ms(now()), round_};
    if (answer_log_.is_open()) {
        answer_log_ << answer_to_json_line(rec) << '\n';
        answer_log_.flush();
        if (!answer_log_) throw Error("answer log write failed");
    }
    answer_keys_.emplace(question_id, annotator_id, choice);
    answers_.push_back(std::move(rec));
    q.status = QuestionStatus::answered;
    leases_.erase(question_id);
    return {true, q.to_triplet(choice)};
}

// --- round transitions ----------------------------------------------------------

void Session::begin_advance(bool force) {
    std::lock_guard lock(mutex_);
    if (phase_ != Phase::collecting) throw StateError("session is " + to_string(phase_) + ", not collecting");
    expire_leases_locked();
    std::size_t open = 0;
    for (QuestionId id : batch_)
        if (questions_.at(id).status != QuestionStatus::answered) ++open;
    bool deadline = config_.round_deadline.count() > 0 && now() >= round_opened_ + config_.round_deadline;
    if (open > 0 && !force && !deadline)
        throw StateError(std::to_string(open) + " questions of round " + std::to_string(round_) + " are still open");
    for (QuestionId id : batch_) {
        auto& q = questions_.at(id);
        if (q.status != QuestionStatus::answered) q.status = QuestionStatus::skipped;
    }
    leases_.clear();
    phase_ = Phase::training;
}

SessionState Session::finish_advance() {
    std::vector<AnsweredQuestion> answered;
    std::vector<Triplet> triplets;
    std::shared_ptr<const EmbeddingModel> current;
    std::set<CanonicalTriple> asked;
    int next_round = 0;
    QuestionId first_id = 0;
    {
        std::lock_guard lock(mutex_);
        if (phase_ != Phase::training) throw StateError("no round transition in progress");
        for (const auto& a : answers_) {
            const auto& q = questions_.at(a.question_id);
            answered.push_back({q, a.choice});
            triplets.push_back(q.to_triplet(a.choice));
        }
        current = model_;
        asked = asked_;
        next_round = round_ + 1;
        first_id = next_question_id_;
    }

    try {
        // Training.
        RoundStats stats;
        stats.round = next_round;
        EmbeddingModel model = *current;
        bool trained_now = false;
        if (!triplets.empty()) {
            if (config_.training.reinitialize_each_round) model = initial_model(dataset_, config_);
            TrainingConfig tc = config_.training;
            tc.seed = derive_seed(config_.training.seed, {static_cast<std::uint64_t>(next_round)});
            auto result = train(std::move(model), triplets, images_, tc);
            model = std::move(result.model);
            stats.loss_history = std::move(result.loss_history);
            trained_now = true;
        }
        bool trained = trained_now || trained_;
        if (!state_dir_.empty())
            save_checkpoint(checkpoint_path(next_round), model,
                            {derive_seed(config_.training.seed, {static_cast<std::uint64_t>(next_round)}), next_round,
                             trained});
        auto new_model = std::make_shared<const EmbeddingModel>(std::move(model));
        {
            std::lock_guard lock(mutex_);
            model_ = new_model;
            checkpoint_round_ = next_round;
            trained_ = trained;
            phase_ = Phase::selecting;
        }

        // Selection.
        const SelectionConfig& sc = config_.selection;
        std::vector<TripletQuery> batch;
        std::vector<Pool> pools;
        std::string report = "{}";
        bool done = next_round >= sc.max_rounds;
        if (!done && sc.strategy == SelectionStrategy::random) {
            batch = random_questions(sorted_ids_, asked, sc.batch_size,
                                     derive_seed(sc.seed, {0, static_cast<std::uint64_t>(next_round)}), first_id);
            first_id += batch.size();
            done = batch.empty();
        } else if (!done) {
            EmbeddingTable embeddings = embed_all(*new_model, images_);
            std::vector<ImageId> seeds = sorted_ids_;
            std::mt19937_64 rng(derive_seed(sc.seed, {1, static_cast<std::uint64_t>(next_round)}));
            std::shuffle(seeds.begin(), seeds.end(), rng);
            seeds.resize(std::min<std::size_t>(seeds.size(), static_cast<std::size_t>(sc.pools_per_round)));
            int per_pool = (sc.max_candidates + sc.pools_per_round - 1) / sc.pools_per_round;
            PoolMap pool_map;
            std::vector<TripletQuery> candidates;
            std::set<CanonicalTriple> seen = asked;
            for (std::size_t i = 0; i < seeds.size(); ++i) {
                PoolId pid = static_cast<PoolId>(next_round) * 1000 + i + 1;
                Pool pool = build_pool(embeddings, seeds[i], sc.pool_size, pid, next_round);
                auto cs = generate_candidates(pool, seen, per_pool,
                                              derive_seed(sc.seed, {2, static_cast<std::uint64_t>(next_round), i}),
                                              first_id);
                first_id += cs.size();
                for (auto& c : cs) {
                    seen.insert(c.canonical());
                    candidates.push_back(std::move(c));
                }
                pools.push_back(pool);
                pool_map.emplace(pid, std::move(pool));
            }
            // Ids decide BF ties; interleave pools so no pool wins ties by position.
            std::mt19937_64 order(derive_seed(sc.seed, {4, static_cast<std::uint64_t>(next_round)}));
            std::shuffle(candidates.begin(), candidates.end(), order);
            QuestionId next_id = first_id - candidates.size();
            for (auto& c : candidates) c.id = next_id++;
            stats.candidates = candidates.size();
            if (candidates.empty() || converged(candidates, answered, pool_map, embeddings, sc, next_round)) {
                done = true;
            } else {
                auto outcome = select_round(candidates, answered, pool_map, embeddings, sc,
                                            derive_seed(sc.seed, {3, static_cast<std::uint64_t>(next_round)}));
                stats.kept = outcome.kept;
                report = round_report_json(next_round, candidates, outcome);
                batch = std::move(outcome.selected);
            }
            if (done) report = round_report_json(next_round, candidates, SelectionOutcome{});
        }
        if (done) batch.clear();
        stats.converged = done;

        std::lock_guard lock(mutex_);
        next_question_id_ = first_id;
        round_opened_ = now();
        last_stats_ = stats;
        if (!state_dir_.empty()) write_round_file(next_round, batch, pools, report, done);
        install_batch_locked(next_round, std::move(batch));
        phase_ = done ? Phase::converged : Phase::collecting;
        return state_locked();
    } catch (...) {
        std::lock_guard lock(mutex_);
        if (phase_ == Phase::training || phase_ == Phase::selecting) phase_ = Phase::collecting;
        throw;
    }
}

SessionState Session::advance_round(bool force) {
    begin_advance(force);
    return finish_advance();
}

// --- results -----------------------------------------------------------------

Dendrogram Session::dendrogram() const {
    std::shared_ptr<const EmbeddingModel> model;
    int round = 0;
    {
        std::lock_guard lock(mutex_);
        if (!trained_) throw StateError("no trained checkpoint yet");
        model = model_;
        round = checkpoint_round_;
    }
    std::lock_guard lock(cache_mutex_);
    if (!dendrogram_cache_ || dendrogram_cache_->first != round)
        dendrogram_cache_.emplace(round, complete_linkage(embed_all(*model, images_)));
    return dendrogram_cache_->second;
}

std::string Session::dendrogram_json() const { return dendrogram_to_json(dendrogram()); }

LevelReport Session::report(unsigned max_level) const {
    Dendrogram method = dendrogram();
    Dendrogram baseline;
    {
        std::lock_guard lock(cache_mutex_);
        if (!baseline_cache_) baseline_cache_ = pixel_baseline(images_.records());
        baseline = *baseline_cache_;
    }
    Partition truth = make_partition(class_labels(images_.records()));
    return level_report(method, baseline, truth, max_level);
}

} // namespace afc
