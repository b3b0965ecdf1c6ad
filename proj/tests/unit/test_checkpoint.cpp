#include <afc/checkpoint.hpp>
#include <afc/error.hpp>

#include <doctest.h>
#include <helpers.hpp>
#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

using namespace afc;

TEST_SUITE("checkpoint") {

TEST_CASE("checkpoint round-trips the model bit for bit") {
    helpers::TempDir dir("ckpt");
    auto m = EmbeddingModel::standard({3, 32, 32, false}, 6, false);
    m.initialize(21);
    save_checkpoint(dir.path() / "m.json", m, {99, 4, true});
    auto ck = load_checkpoint(dir.path() / "m.json");
    CHECK(ck.model == m);
    CHECK(ck.info.seed == 99);
    CHECK(ck.info.round == 4);
    CHECK(ck.info.trained);
    CHECK_FALSE(ck.model.normalize_output());
    CHECK(ck.model.embedding_dim() == 6);
}

TEST_CASE("parameter file holds little-endian float32 values in layer order") {
    helpers::TempDir dir("ckpt");
    auto m = EmbeddingModel::standard({1, 16, 16, false});
    m.initialize(5);
    save_checkpoint(dir.path() / "m.json", m, {});
    std::ifstream in(dir.path() / "m.params", std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 4 * m.parameter_count());
    for (std::size_t i = 0; i < m.parameter_count(); ++i) {
        std::uint32_t u = 0;
        for (int b = 3; b >= 0; --b) u = (u << 8) | bytes[4 * i + static_cast<std::size_t>(b)];
        float f;
        std::memcpy(&f, &u, 4);
        CHECK(static_cast<double>(f) == m.parameters()[i]);
    }
}

TEST_CASE("manifest records the layer specs and metadata") {
    helpers::TempDir dir("ckpt");
    auto m = EmbeddingModel::standard({3, 32, 32, false});
    save_checkpoint(dir.path() / "m.json", m, {7, 2, false});
    std::ifstream in(dir.path() / "m.json");
    auto j = nlohmann::json::parse(in);
    CHECK(j.at("layers").size() == m.layers().size());
    CHECK(j.at("layers")[0].at("kind") == "convolution");
    CHECK(j.at("embedding_dim") == 8);
    CHECK(j.at("normalize_output") == true);
    CHECK(j.at("seed") == 7);
    CHECK(j.at("round") == 2);
}

TEST_CASE("damaged checkpoints are rejected") {
    helpers::TempDir dir("ckpt");
    auto m = EmbeddingModel::standard({1, 16, 16, false});
    m.initialize(1);
    save_checkpoint(dir.path() / "m.json", m, {});

    SUBCASE("truncated parameter file") {
        std::filesystem::resize_file(dir.path() / "m.params", 4 * m.parameter_count() - 4);
        CHECK_THROWS_AS(load_checkpoint(dir.path() / "m.json"), TruncationError);
    }
    SUBCASE("missing parameter file") {
        std::filesystem::remove(dir.path() / "m.params");
        CHECK_THROWS_AS(load_checkpoint(dir.path() / "m.json"), LookupError);
    }
    SUBCASE("not JSON") {
        std::ofstream(dir.path() / "m.json") << "garbage";
        CHECK_THROWS_AS(load_checkpoint(dir.path() / "m.json"), FormatError);
    }
    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(load_checkpoint(dir.path() / "absent.json"), LookupError);
    }
}

} // TEST_SUITE
