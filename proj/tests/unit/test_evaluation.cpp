#include <afc/error.hpp>
#include <afc/evaluation.hpp>

#include <doctest.h>
#include <helpers.hpp>
#include <json.hpp>
#include <oracles.hpp>

#include <random>

using namespace afc;

namespace {

Partition from_vector(const std::vector<int>& labels) {
    std::map<ImageId, int> m;
    for (std::size_t i = 0; i < labels.size(); ++i) m["i" + std::to_string(1000 + i)] = labels[i];
    return make_partition(m);
}

} // namespace

TEST_SUITE("evaluation") {

TEST_CASE("NMI examples") {
    auto u = from_vector({0, 0, 1, 1, 2, 2});
    CHECK(nmi(u, u) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nmi(from_vector({0, 0, 0, 0}), from_vector({0, 1, 2, 3})) == 0.0);
    CHECK(nmi(from_vector({0, 1, 2, 3}), from_vector({0, 0, 0, 0})) == 0.0);
    CHECK(nmi(from_vector({0, 0, 1, 1}), from_vector({0, 1, 0, 1})) == doctest::Approx(0.0).epsilon(1e-15));
    // relabelling clusters does not matter
    CHECK(nmi(from_vector({0, 0, 1, 1, 2}), from_vector({5, 5, 3, 3, 9})) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("NMI matches the contingency-table reference") {
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 80;
        const int ku = 1 + static_cast<int>(rng() % 6), kv = 1 + static_cast<int>(rng() % 6);
        std::vector<int> u(n), v(n);
        for (auto& x : u) x = static_cast<int>(rng() % ku);
        for (auto& x : v) x = static_cast<int>(rng() % kv);
        auto pu = from_vector(u), pv = from_vector(v);
        CHECK(std::abs(nmi(pu, pv) - oracle::brute_force_nmi(u, v)) < 1e-9);
        CHECK(std::abs(nmi(pu, pv, NmiNormalization::arithmetic) - oracle::brute_force_nmi(u, v, true)) < 1e-9);
        CHECK(nmi(pu, pv) == doctest::Approx(nmi(pv, pu)).epsilon(1e-12));
        CHECK(nmi(pu, pv) >= 0.0);
        CHECK(nmi(pu, pv) <= 1.0);
    }
}

TEST_CASE("NMI needs the same leaf set") {
    auto a = make_partition({{"x", 0}, {"y", 1}});
    auto b = make_partition({{"x", 0}, {"z", 1}});
    CHECK_THROWS_AS(nmi(a, b), InputError);
}

TEST_CASE("pixel baseline clusters raw intensities") {
    std::mt19937_64 rng(1);
    auto a = helpers::random_image("a", 4, 4, 1, rng);
    auto b = a;
    b.id = "b";
    auto c = helpers::random_image("c", 4, 4, 1, rng);
    std::vector<ImageRecord> recs{c, a, b};
    auto d = pixel_baseline(recs);
    CHECK(d.leaves == std::vector<ImageId>{"a", "b", "c"});
    CHECK(d.merges[0] == Merge{0, 1, 0.0});

    // two images that share all pixels but one merge before the third
    auto near = a;
    near.id = "n";
    near.pixels[3] = static_cast<std::uint8_t>(255 - near.pixels[3]);
    std::vector<ImageRecord> three{a, near, c};
    auto d3 = pixel_baseline(three);
    std::vector<std::vector<double>> flat;
    for (const auto* r : {&a, &c, &near}) {
        std::vector<double> v;
        for (auto p : r->pixels) v.push_back(p / 255.0);
        flat.push_back(v);
    }
    auto ref = oracle::brute_force_complete_linkage(flat);
    CHECK(d3.leaves == std::vector<ImageId>{"a", "c", "n"});
    CHECK(d3.merges[0].left == ref[0].left);
    CHECK(d3.merges[0].right == ref[0].right);
    CHECK(d3.merges[0].height == doctest::Approx(ref[0].height).epsilon(1e-12));
    CHECK(d3.merges[0] == Merge{0, 2, d3.merges[0].height});

    auto odd = helpers::random_image("odd", 5, 4, 1, rng);
    std::vector<ImageRecord> mixed{a, odd};
    CHECK_THROWS_AS(pixel_baseline(mixed), InputError);
}

TEST_CASE("level report") {
    std::mt19937_64 rng(2);
    std::vector<ImageId> ids;
    std::vector<std::vector<double>> pts;
    std::map<ImageId, int> truth;
    std::normal_distribution<double> g(0.0, 0.1);
    for (int i = 0; i < 32; ++i) {
        ids.push_back("p" + std::to_string(100 + i));
        pts.push_back({(i % 4) * 10.0 + g(rng), g(rng)});
        truth[ids.back()] = i % 4;
    }
    auto method = complete_linkage(ids, pts);
    std::vector<std::vector<double>> noise;
    for (int i = 0; i < 32; ++i) noise.push_back({g(rng), g(rng)});
    auto baseline = complete_linkage(ids, noise);
    auto report = level_report(method, baseline, make_partition(truth), 3);
    REQUIRE(report.rows.size() == 4);
    for (unsigned l = 0; l < 4; ++l) {
        CHECK(report.rows[l].level == l);
        CHECK(report.rows[l].cluster_count == (std::size_t{1} << l));
        CHECK(report.rows[l].nmi_method >= 0.0);
        CHECK(report.rows[l].nmi_method <= 1.0);
    }
    CHECK(report.rows[0].nmi_method == 0.0);
    CHECK(report.rows[0].nmi_baseline == 0.0);
    CHECK(report.rows[2].nmi_method == doctest::Approx(1.0));

    auto csv = report.to_csv();
    CHECK(csv.rfind("level,clusters,baseline_nmi,method_nmi\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    auto j = nlohmann::json::parse(report.to_json());
    CHECK(j.size() == 4);
    CHECK(j[2].at("method_nmi").get<double>() == doctest::Approx(1.0));
    CHECK(report.to_table().find("Level") != std::string::npos);

    CHECK_THROWS_AS(level_report(method, baseline, make_partition(truth), 6), InputError);
}

} // TEST_SUITE
