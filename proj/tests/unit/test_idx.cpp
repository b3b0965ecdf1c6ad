#include <afc/dataset.hpp>
#include <afc/error.hpp>

#include <doctest.h>
#include <helpers.hpp>

#include <fstream>
#include <iterator>

using namespace afc;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(AFC_FIXTURE_DIR) / "idx";

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Header fields decoded by hand, independent of the parser.
std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return std::uint32_t{b[at]} << 24 | std::uint32_t{b[at + 1]} << 16 | std::uint32_t{b[at + 2]} << 8 | b[at + 3];
}

} // namespace

TEST_SUITE("idx") {

TEST_CASE("fixture headers decode as written") {
    auto raw = slurp(kFixtures / "sample-images-idx3-ubyte");
    auto img = parse_idx_images(raw);
    CHECK(img.count == be32(raw, 4));
    CHECK(img.count == 60);
    CHECK(img.rows == 28);
    CHECK(img.cols == 28);
    CHECK(std::equal(img.pixels.begin(), img.pixels.end(), raw.begin() + 16));

    auto lraw = slurp(kFixtures / "sample-labels-idx1-ubyte");
    auto labels = parse_idx_labels(lraw);
    REQUIRE(labels.size() == 60);
    for (std::size_t i = 0; i < labels.size(); ++i) CHECK(labels[i] == i % 10);
}

TEST_CASE("parse then serialize is byte-identical") {
    auto raw = slurp(kFixtures / "sample-images-idx3-ubyte");
    CHECK(serialize_idx_images(parse_idx_images(raw)) == raw);
    auto lraw = slurp(kFixtures / "sample-labels-idx1-ubyte");
    CHECK(serialize_idx_labels(parse_idx_labels(lraw)) == lraw);
}

TEST_CASE("gzip streams decode to the plain bytes") {
    CHECK(read_maybe_gzip(kFixtures / "sample-images-idx3-ubyte.gz") == slurp(kFixtures / "sample-images-idx3-ubyte"));
    CHECK(read_maybe_gzip(kFixtures / "sample-labels-idx1-ubyte.gz") == slurp(kFixtures / "sample-labels-idx1-ubyte"));
    CHECK_THROWS_AS(read_maybe_gzip(kFixtures / "absent"), LookupError);

    helpers::TempDir dir("idx");
    auto gz = slurp(kFixtures / "sample-images-idx3-ubyte.gz");
    gz.resize(gz.size() / 2);
    std::ofstream(dir.path() / "cut.gz", std::ios::binary).write(reinterpret_cast<const char*>(gz.data()), gz.size());
    CHECK_THROWS_AS(read_maybe_gzip(dir.path() / "cut.gz"), TruncationError);
}

TEST_CASE("wrong magic numbers are rejected") {
    CHECK_THROWS_AS(parse_idx_images(slurp(kFixtures / "bad-magic-images-idx3-ubyte")), FormatError);
    CHECK_THROWS_AS(parse_idx_labels(slurp(kFixtures / "bad-type-labels-idx1-ubyte")), FormatError);
    // an image file is not a label file and vice versa
    CHECK_THROWS_AS(parse_idx_labels(slurp(kFixtures / "sample-images-idx3-ubyte")), FormatError);
    CHECK_THROWS_AS(parse_idx_images(slurp(kFixtures / "sample-labels-idx1-ubyte")), FormatError);
}

TEST_CASE("short payloads are truncation errors") {
    CHECK_THROWS_AS(parse_idx_images(slurp(kFixtures / "truncated-images-idx3-ubyte")), TruncationError);
    std::vector<std::uint8_t> tiny{0, 0, 8};
    CHECK_THROWS_AS(parse_idx_images(tiny), TruncationError);
    std::vector<std::uint8_t> header_only{0, 0, 8, 3, 0, 0};
    CHECK_THROWS_AS(parse_idx_images(header_only), TruncationError);
    auto labels = slurp(kFixtures / "sample-labels-idx1-ubyte");
    labels.push_back(1);
    CHECK_THROWS_AS(parse_idx_labels(labels), TruncationError);
}

TEST_CASE("ingest pairs images with labels") {
    auto ds = ingest_idx(kFixtures / "sample-images-idx3-ubyte.gz", kFixtures / "sample-labels-idx1-ubyte");
    REQUIRE(ds.records.size() == 60);
    CHECK(ds.manifest.shape == ImageShape{28, 28, 1});
    CHECK(ds.records[0].id == "idx_00000");
    CHECK(ds.records[59].id == "idx_00059");
    CHECK(ds.records[13].label == 3);
    CHECK_FALSE(ds.records[13].attributes);
    auto raw = slurp(kFixtures / "sample-images-idx3-ubyte");
    CHECK(std::equal(ds.records[13].pixels.begin(), ds.records[13].pixels.end(), raw.begin() + 16 + 13 * 784));
    CHECK(ds.manifest.vocabularies.at("label").size() == 10);
}

TEST_CASE("mismatched counts are a consistency error") {
    helpers::TempDir dir("idx");
    std::vector<std::uint8_t> five{1, 2, 3, 4, 5};
    auto bytes = serialize_idx_labels(five);
    std::ofstream(dir.path() / "labels", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    CHECK_THROWS_AS(ingest_idx(kFixtures / "sample-images-idx3-ubyte", dir.path() / "labels"), ConsistencyError);
}

TEST_CASE("write_idx reproduces the source files") {
    helpers::TempDir dir("idx");
    auto ds = ingest_idx(kFixtures / "sample-images-idx3-ubyte", kFixtures / "sample-labels-idx1-ubyte");
    write_idx(ds.records, dir.path() / "img", dir.path() / "lbl");
    CHECK(slurp(dir.path() / "img") == slurp(kFixtures / "sample-images-idx3-ubyte"));
    CHECK(slurp(dir.path() / "lbl") == slurp(kFixtures / "sample-labels-idx1-ubyte"));

    auto colour = std::vector<ImageRecord>{helpers::shapes32().records[0]};
    colour[0].label = 1;
    CHECK_THROWS_AS(write_idx(colour, dir.path() / "a", dir.path() / "b"), InputError);
    auto unlabeled = ds.records;
    unlabeled[4].label.reset();
    CHECK_THROWS_AS(write_idx(unlabeled, dir.path() / "a", dir.path() / "b"), InputError);
}

TEST_CASE("serialize rejects inconsistent dimensions") {
    IdxImages img;
    img.count = 2;
    img.rows = 2;
    img.cols = 2;
    img.pixels.resize(7);
    CHECK_THROWS_AS(serialize_idx_images(img), InputError);
}

} // TEST_SUITE
