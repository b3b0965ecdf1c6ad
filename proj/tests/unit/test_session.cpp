#include <afc/config.hpp>
#include <afc/error.hpp>
#include <afc/session.hpp>

#include <doctest.h>
#include <helpers.hpp>
#include <json.hpp>

#include <fstream>
#include <set>

using namespace afc;
using namespace std::chrono_literals;

namespace {

SessionConfig small_config() {
    SessionConfig c;
    c.training.epochs_per_round = 1;
    c.training.batch_size = 8;
    c.initial_batch = 20;
    c.selection.batch_size = 10;
    c.selection.max_candidates = 60;
    c.selection.pools_per_round = 5;
    c.selection.pool_size = 8;
    c.selection.max_rounds = 3;
    return c;
}

struct FakeClock {
    std::shared_ptr<std::chrono::system_clock::time_point> t =
        std::make_shared<std::chrono::system_clock::time_point>(std::chrono::system_clock::time_point{} + 1000h);
    Clock clock() const {
        auto p = t;
        return [p] { return *p; };
    }
    void advance(std::chrono::seconds s) const { *t += s; }
};

std::size_t answer_round(Session& s, const std::string& who = "oracle") {
    std::size_t n = 0;
    while (auto q = s.next_question(who)) {
        s.submit_answer(q->id, answer(*q, s.images(), OracleConfig{}), who);
        ++n;
    }
    return n;
}

} // namespace

TEST_SUITE("session") {

TEST_CASE("a new session opens with a random batch") {
    Session s(helpers::shapes32(), small_config());
    auto st = s.state();
    CHECK(st.round == 0);
    CHECK(st.phase == Phase::collecting);
    CHECK(st.pending == 20);
    CHECK(st.pending_ids.size() == 20);
    CHECK_FALSE(st.trained);
    CHECK(st.answers_logged == 0);
    std::set<CanonicalTriple> distinct;
    for (const auto& q : s.current_batch()) {
        CHECK(q.option_a < q.option_b);
        CHECK(q.anchor != q.option_a);
        CHECK(q.anchor != q.option_b);
        distinct.insert(q.canonical());
    }
    CHECK(distinct.size() == 20);
    CHECK_THROWS_AS((void)s.dendrogram(), StateError);
}

TEST_CASE("leases hand out distinct questions and expire") {
    FakeClock fc;
    auto cfg = small_config();
    cfg.lease_duration = 60s;
    Session s(helpers::shapes32(), cfg, {}, fc.clock());
    auto q1 = s.next_question("alice");
    auto q2 = s.next_question("bob");
    REQUIRE(q1);
    REQUIRE(q2);
    CHECK(q1->id != q2->id);
    // the same annotator gets the question back while the lease holds
    CHECK(s.next_question("alice")->id == q1->id);
    CHECK(s.state().leased == 2);
    fc.advance(61s);
    CHECK(s.state().leased == 0);
    CHECK(s.state().pending == 20);
    // an expired lease can still be answered
    CHECK(s.submit_answer(q1->id, Choice::a, "alice").recorded);
    CHECK_THROWS_AS(s.next_question(""), InputError);
}

TEST_CASE("submissions are idempotent and validated") {
    Session s(helpers::shapes32(), small_config());
    auto q = s.next_question("ann");
    REQUIRE(q);
    auto r = s.submit_answer(q->id, Choice::b, "ann");
    CHECK(r.recorded);
    CHECK(r.triplet == Triplet{q->anchor, q->option_b, q->option_a});
    auto again = s.submit_answer(q->id, Choice::b, "ann");
    CHECK_FALSE(again.recorded);
    CHECK(again.triplet == r.triplet);
    CHECK(s.state().answers_logged == 1);
    CHECK(s.state().answered == 1);
    CHECK_THROWS_AS(s.submit_answer(99999, Choice::a, "ann"), LookupError);
    CHECK_THROWS_AS(s.submit_answer(q->id, Choice::a, ""), InputError);
    CHECK(s.training_triplets() == std::vector<Triplet>{r.triplet});
}

TEST_CASE("a round closes only when answered, forced or past its deadline") {
    FakeClock fc;
    auto cfg = small_config();
    cfg.round_deadline = 300s;
    Session s(helpers::shapes32(), cfg, {}, fc.clock());
    auto q = s.next_question("ann");
    s.submit_answer(q->id, Choice::a, "ann");
    CHECK_THROWS_AS(s.advance_round(), StateError);
    CHECK(s.state().phase == Phase::collecting);
    fc.advance(301s);
    auto st = s.advance_round();
    CHECK(st.round == 1);
    CHECK(st.trained);
    CHECK(st.checkpoint_round == 1);
    CHECK(st.phase == Phase::collecting);
    CHECK(st.pending == 10);

    // the old round is closed: fresh answers fail, replays are still acknowledged
    CHECK_FALSE(s.submit_answer(q->id, Choice::a, "ann").recorded);
    CHECK_THROWS_AS(s.submit_answer(q->id, Choice::b, "ann"), StateError);
    auto old = s.question(q->id + 1);
    REQUIRE(old);
    CHECK(old->status == QuestionStatus::skipped);
}

TEST_CASE("forced advance skips open questions and trains nothing without answers") {
    Session s(helpers::shapes32(), small_config());
    auto st = s.advance_round(true);
    CHECK(st.round == 1);
    CHECK_FALSE(st.trained);
    REQUIRE(s.last_round_stats());
    CHECK(s.last_round_stats()->loss_history.empty());
}

TEST_CASE("the loop runs to max_rounds without repeating questions") {
    Session s(helpers::shapes32(), small_config());
    std::set<CanonicalTriple> asked;
    for (int round = 0; round < 3; ++round) {
        for (const auto& q : s.current_batch()) CHECK(asked.insert(q.canonical()).second);
        CHECK(answer_round(s) > 0);
        auto st = s.advance_round();
        CHECK(st.round == round + 1);
        auto stats = s.last_round_stats();
        REQUIRE(stats);
        CHECK(stats->loss_history.size() == 1);
    }
    auto st = s.state();
    CHECK(st.phase == Phase::converged);
    CHECK(st.pending == 0);
    CHECK(s.last_round_stats()->converged);
    CHECK(st.answers_logged == 40);
    CHECK_THROWS_AS(s.next_question("oracle"), StateError);
    CHECK_THROWS_AS(s.advance_round(true), StateError);

    auto d = s.dendrogram();
    CHECK(d.leaf_count() == 135);
    auto rep = s.report(3);
    CHECK(rep.rows.size() == 4);
    CHECK(nlohmann::json::parse(s.dendrogram_json()).contains("children"));
}

TEST_CASE("zero rounds converge immediately") {
    auto cfg = small_config();
    cfg.selection.max_rounds = 0;
    Session s(helpers::shapes32(), cfg);
    CHECK(s.state().phase == Phase::converged);
    CHECK(s.current_batch().empty());
}

TEST_CASE("random strategy draws unseen questions") {
    auto cfg = small_config();
    cfg.selection.strategy = SelectionStrategy::random;
    Session s(helpers::shapes32(), cfg);
    answer_round(s);
    s.advance_round();
    auto batch = s.current_batch();
    CHECK(batch.size() == 10);
    for (const auto& q : batch) CHECK(q.pool_id == 0);
}

TEST_CASE("selected questions spread over several pools") {
    Session s(helpers::shapes32(), small_config());
    answer_round(s);
    s.advance_round();
    std::set<PoolId> pools;
    for (const auto& q : s.current_batch()) pools.insert(q.pool_id);
    // ids order equal Bayes factors, so they must not follow pool order
    CHECK(pools.size() >= 3);
}

TEST_CASE("sessions are deterministic in their seeds") {
    auto run = [] {
        Session s(helpers::shapes32(), small_config());
        answer_round(s);
        s.advance_round();
        return s.current_batch();
    };
    CHECK(run() == run());
}

TEST_CASE("resume restores the exact session") {
    helpers::TempDir dir("session");
    auto cfg = small_config();
    SessionState before;
    std::vector<TripletQuery> batch_before;
    std::vector<AnswerRecord> answers_before;
    {
        Session s(helpers::shapes32(), cfg, dir.path());
        answer_round(s);
        s.advance_round();
        // half of round 1, plus one outstanding lease
        for (int i = 0; i < 5; ++i) {
            auto q = s.next_question("ann");
            s.submit_answer(q->id, Choice::a, "ann");
        }
        s.next_question("bob");
        before = s.state();
        batch_before = s.current_batch();
        answers_before = s.answers();
        CHECK_THROWS_AS(Session(helpers::shapes32(), cfg, dir.path()), StateError);
    }
    CHECK(std::filesystem::exists(dir.path() / "rounds" / "round_0001.json"));
    CHECK(std::filesystem::exists(dir.path() / "checkpoints" / "round_0001.params"));

    auto r = Session::resume(helpers::shapes32(), dir.path());
    auto after = r->state();
    // the lease is gone and its question is pending again
    CHECK(after.leased == 0);
    before.pending += before.leased;
    before.leased = 0;
    before.pending_ids.clear();
    for (const auto& q : batch_before)
        if (q.status != QuestionStatus::answered) before.pending_ids.push_back(q.id);
    CHECK(after == before);
    CHECK(r->answers() == answers_before);
    auto batch_after = r->current_batch();
    REQUIRE(batch_after.size() == batch_before.size());
    for (std::size_t i = 0; i < batch_after.size(); ++i) {
        CHECK(batch_after[i].id == batch_before[i].id);
        CHECK(batch_after[i].canonical() == batch_before[i].canonical());
    }

    // the resumed session keeps going and selects what the original would have
    answer_round(*r);
    r->advance_round();
    CHECK(r->state().phase == Phase::collecting);

    CHECK_THROWS_AS(Session::resume(helpers::shapes32(), dir.path() / "absent"), LookupError);
}

TEST_CASE("resume drops a torn final answer line") {
    helpers::TempDir dir("session");
    {
        Session s(helpers::shapes32(), small_config(), dir.path());
        for (int i = 0; i < 3; ++i) {
            auto q = s.next_question("ann");
            s.submit_answer(q->id, Choice::b, "ann");
        }
    }
    {
        std::ofstream log(dir.path() / "answers.jsonl", std::ios::app);
        log << R"({"question_id":4,"choice":"A")";
    }
    auto r = Session::resume(helpers::shapes32(), dir.path());
    CHECK(r->state().answers_logged == 3);
    auto q = r->next_question("ann");
    CHECK(r->submit_answer(q->id, Choice::a, "ann").recorded);
    auto r2 = Session::resume(helpers::shapes32(), dir.path());
    CHECK(r2->state().answers_logged == 4);
}

TEST_CASE("answer records serialize one per line") {
    AnswerRecord rec{12, Choice::b, "someone", 1700000000123, 4};
    auto line = answer_to_json_line(rec);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(answer_from_json_line(line) == rec);
    CHECK_THROWS_AS(answer_from_json_line("{nope"), FormatError);
    CHECK_THROWS_AS(answer_from_json_line(R"({"question_id":1})"), FormatError);
}

TEST_CASE("state JSON and phase names") {
    Session s(helpers::shapes32(), small_config());
    auto j = nlohmann::json::parse(session_state_json(s.state()));
    CHECK(j.at("round") == 0);
    CHECK(j.at("phase") == "collecting");
    CHECK(j.at("pending") == 20);
    CHECK(to_string(Phase::converged) == "converged");
}

TEST_CASE("session config validation") {
    auto c = small_config();
    c.embedding_dim = 0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = small_config();
    c.lease_duration = 0s;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = small_config();
    c.training.batch_size = 0;
    CHECK_THROWS_AS(Session(helpers::shapes32(), c), InputError);
    Dataset two;
    two.records.assign(helpers::shapes32().records.begin(), helpers::shapes32().records.begin() + 2);
    CHECK_THROWS_AS(Session(two, small_config()), InputError);
}

} // TEST_SUITE
