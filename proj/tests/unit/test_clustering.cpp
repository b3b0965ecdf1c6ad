#include <afc/clustering.hpp>
#include <afc/error.hpp>

#include <doctest.h>
#include <helpers.hpp>
#include <json.hpp>
#include <oracles.hpp>

#include <random>
#include <set>

using namespace afc;

namespace {

std::vector<ImageId> numbered(std::size_t n) {
    std::vector<ImageId> ids;
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "p%03zu", i);
        ids.push_back(buf);
    }
    return ids;
}

std::vector<std::vector<double>> gaussian_points(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts)
        for (auto& x : p) x = g(rng);
    return pts;
}

std::set<std::set<ImageId>> as_sets(const Partition& p) {
    std::set<std::set<ImageId>> out;
    for (const auto& c : p.clusters()) out.insert(std::set<ImageId>(c.begin(), c.end()));
    return out;
}

} // namespace

TEST_SUITE("clustering") {

TEST_CASE("three points on a line") {
    EmbeddingTable e{{"a", {0.0}}, {"b", {1.0}}, {"c", {10.0}}};
    auto d = complete_linkage(e);
    REQUIRE(d.merges.size() == 2);
    CHECK(d.leaves == std::vector<ImageId>{"a", "b", "c"});
    CHECK(d.merges[0] == Merge{0, 1, 1.0});
    CHECK(d.merges[1] == Merge{2, 3, 10.0});

    auto two = cut(d, 2);
    CHECK(two.assignment.at("a") == 0);
    CHECK(two.assignment.at("b") == 0);
    CHECK(two.assignment.at("c") == 1);
}

TEST_CASE("degenerate inputs") {
    auto single = complete_linkage(EmbeddingTable{{"x", {1.0, 2.0}}});
    CHECK(single.leaf_count() == 1);
    CHECK(single.merges.empty());
    CHECK(cut(single, 1).cluster_count() == 1);
    CHECK_THROWS_AS(complete_linkage(EmbeddingTable{}), InputError);
    CHECK_THROWS_AS(complete_linkage(EmbeddingTable{{"a", {1.0}}, {"b", {1.0, 2.0}}}), InputError);
}

TEST_CASE("fast complete linkage matches the brute-force reference") {
    std::mt19937_64 rng(31337);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + rng() % 49, dim = 1 + rng() % 6;
        auto pts = gaussian_points(n, dim, rng);
        const bool squared = trial % 4 == 3;
        auto d = complete_linkage(numbered(n), pts, squared ? LinkageDistance::squared_euclidean : LinkageDistance::euclidean);
        auto ref = oracle::brute_force_complete_linkage(pts, squared);
        REQUIRE(d.merges.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(d.merges[i].left == ref[i].left);
            CHECK(d.merges[i].right == ref[i].right);
            CHECK(std::abs(d.merges[i].height - ref[i].height) < 1e-9);
        }
    }
}

TEST_CASE("exact ties follow the node-index order") {
    // unit square: four sides tie at 1
    std::vector<std::vector<double>> sq{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    auto d = complete_linkage(numbered(4), sq);
    auto ref = oracle::brute_force_complete_linkage(sq);
    REQUIRE(d.merges.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(d.merges[i].left == ref[i].left);
        CHECK(d.merges[i].right == ref[i].right);
        CHECK(d.merges[i].height == doctest::Approx(ref[i].height));
    }
    CHECK(d.merges[0] == Merge{0, 1, 1.0});

    // duplicated points merge at height zero, lowest pair first
    std::vector<std::vector<double>> dup{{3, 3}, {0, 0}, {3, 3}, {0, 0}};
    auto dd = complete_linkage(numbered(4), dup);
    CHECK(dd.merges[0] == Merge{0, 2, 0.0});
    CHECK(dd.merges[1] == Merge{1, 3, 0.0});
}

TEST_CASE("dendrogram structure invariants") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng() % 60;
        auto d = complete_linkage(numbered(n), gaussian_points(n, 3, rng));
        CHECK(d.merges.size() == n - 1);
        std::set<std::size_t> children;
        for (std::size_t i = 0; i < d.merges.size(); ++i) {
            const auto& m = d.merges[i];
            CHECK(m.left < m.right);
            CHECK(m.right < n + i);
            CHECK(children.insert(m.left).second);
            CHECK(children.insert(m.right).second);
            if (i > 0) CHECK(m.height >= d.merges[i - 1].height);
        }
        for (std::size_t m = 1; m <= n; ++m) {
            auto p = cut(d, m);
            CHECK(p.cluster_count() == static_cast<int>(m));
            CHECK(p.assignment.size() == n);
            for (const auto& c : p.clusters()) CHECK_FALSE(c.empty());
        }
    }
}

TEST_CASE("cuts agree with replaying the merges") {
    std::mt19937_64 rng(6);
    const std::size_t n = 30;
    auto ids = numbered(n);
    auto d = complete_linkage(ids, gaussian_points(n, 4, rng));
    for (std::size_t m : {1, 2, 3, 5, 8, 30}) {
        auto expected = oracle::replay_cut(n, d.merges, m);
        std::set<std::set<ImageId>> named;
        for (const auto& c : expected) {
            std::set<ImageId> s;
            for (auto i : c) s.insert(ids[i]);
            named.insert(s);
        }
        CHECK(as_sets(cut(d, m)) == named);
    }
}

TEST_CASE("cluster indices follow the smallest member identifier") {
    std::mt19937_64 rng(8);
    auto d = complete_linkage(numbered(25), gaussian_points(25, 2, rng));
    for (std::size_t m = 1; m <= 25; ++m) {
        auto p = cut(d, m);
        auto clusters = p.clusters();
        for (std::size_t i = 0; i < clusters.size(); ++i) {
            CHECK(p.assignment.at(clusters[i].front()) == static_cast<int>(i));
            if (i > 0) CHECK(clusters[i - 1].front() < clusters[i].front());
        }
    }
}

TEST_CASE("cut and level cut reject impossible sizes") {
    EmbeddingTable e{{"a", {0.0}}, {"b", {1.0}}, {"c", {10.0}}};
    auto d = complete_linkage(e);
    CHECK_THROWS_AS(cut(d, 0), InputError);
    CHECK_THROWS_AS(cut(d, 4), InputError);
    CHECK(level_cut(d, 0).cluster_count() == 1);
    CHECK(level_cut(d, 1).cluster_count() == 2);
    CHECK_THROWS_AS(level_cut(d, 2), InputError);
    CHECK(cut(d, 3).cluster_count() == 3);
}

TEST_CASE("insertion order does not change the partitions") {
    std::mt19937_64 rng(12);
    auto pts = gaussian_points(40, 3, rng);
    auto ids = numbered(40);
    EmbeddingTable a;
    for (std::size_t i = 0; i < ids.size(); ++i) a[ids[i]] = pts[i];
    auto da = complete_linkage(a);

    // reversed identifiers change the leaf order
    std::vector<ImageId> rids(ids.rbegin(), ids.rend());
    std::vector<std::vector<double>> rpts(pts.rbegin(), pts.rend());
    auto db = complete_linkage(rids, rpts);
    for (std::size_t m = 1; m <= 40; ++m) CHECK(as_sets(cut(da, m)) == as_sets(cut(db, m)));
}

TEST_CASE("rigid motions leave merge heights unchanged") {
    std::mt19937_64 rng(13);
    auto pts = gaussian_points(35, 2, rng);
    const double th = 0.7, c = std::cos(th), s = std::sin(th);
    auto moved = pts;
    for (auto& p : moved) p = {c * p[0] - s * p[1] + 5.0, s * p[0] + c * p[1] - 3.0};
    auto d1 = complete_linkage(numbered(35), pts);
    auto d2 = complete_linkage(numbered(35), moved);
    for (std::size_t i = 0; i < d1.merges.size(); ++i) CHECK(std::abs(d1.merges[i].height - d2.merges[i].height) < 1e-9);
}

TEST_CASE("JSON export nests children bottom-up") {
    EmbeddingTable e{{"a", {0.0}}, {"b", {1.0}}, {"c", {10.0}}};
    auto j = nlohmann::json::parse(dendrogram_to_json(complete_linkage(e)));
    CHECK(j.at("height") == 10.0);
    REQUIRE(j.at("children").size() == 2);
    // children follow node order: leaf c (node 2) before the a-b merge (node 3)
    CHECK(j["children"][0].at("id") == "c");
    const auto& ab = j["children"][1];
    CHECK(ab.at("height") == 1.0);
    CHECK(ab.at("children")[0].at("id") == "a");
    CHECK(ab.at("children")[1].at("id") == "b");

    auto one = nlohmann::json::parse(dendrogram_to_json(complete_linkage(EmbeddingTable{{"solo", {0.0}}})));
    CHECK(one.at("id") == "solo");
}

TEST_CASE("Newick export uses height differences as branch lengths") {
    EmbeddingTable e{{"a", {0.0}}, {"b", {1.0}}, {"c", {10.0}}};
    CHECK(dendrogram_to_newick(complete_linkage(e)) == "(c:10,(a:1,b:1):9);");
    EmbeddingTable odd{{"x y", {0.0}}, {"z", {2.0}}};
    CHECK(dendrogram_to_newick(complete_linkage(odd)) == "('x y':2,z:2);");
}

TEST_CASE("partitions relabel by smallest identifier") {
    auto p = make_partition({{"b", 7}, {"a", 3}, {"c", 7}, {"d", 3}});
    CHECK(p.assignment.at("a") == 0);
    CHECK(p.assignment.at("d") == 0);
    CHECK(p.assignment.at("b") == 1);
    CHECK(p.cluster_count() == 2);
}

} // TEST_SUITE
