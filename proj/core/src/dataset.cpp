#include <afc/dataset.hpp>
#include <afc/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace afc {

using nlohmann::json;

ImageStore::ImageStore(std::vector<ImageRecord> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!index_.emplace(records_[i].id, i).second) throw InputError("duplicate image id '" + records_[i].id + "'");
    }
}

const ImageRecord& ImageStore::at(const ImageId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw LookupError("unknown image id '" + id + "'");
    return records_[it->second];
}

std::vector<ImageId> ImageStore::sorted_ids() const {
    std::vector<ImageId> ids;
    ids.reserve(records_.size());
    for (const auto& r : records_) ids.push_back(r.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

// ---------------------------------------------------------------------------
// Simple shapes

const std::vector<std::string>& shape_family_names() {
    static const std::vector<std::string> v{"circle", "triangle", "rectangle"};
    return v;
}

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> v{"circle",          "oval-wide",     "oval-tall",
                                            "triangle-equilateral", "triangle-tall", "triangle-wide",
                                            "square",          "rect-tall",     "rect-wide"};
    return v;
}

const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v{"red", "green", "blue", "yellow", "magenta"};
    return v;
}

const std::vector<std::string>& thickness_names() {
    static const std::vector<std::string> v{"thin", "medium", "thick"};
    return v;
}

int stroke_width(int size, int thickness) { return (thickness + 1) * size / 32; }

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 5> kColors{{
    {230, 25, 25},   // red
    {20, 160, 40},   // green
    {30, 60, 230},   // blue
    {235, 200, 0},   // yellow
    {210, 30, 210},  // magenta
}};

struct Point {
    double x, y;
};

double segment_distance(Point p, Point a, Point b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double wx = p.x - a.x, wy = p.y - a.y;
    const double t = std::clamp((wx * vx + wy * vy) / (vx * vx + vy * vy), 0.0, 1.0);
    const double dx = wx - t * vx, dy = wy - t * vy;
    return std::sqrt(dx * dx + dy * dy);
}

double polygon_distance(Point p, const std::vector<Point>& poly) {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < poly.size(); ++i) d = std::min(d, segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
    return d;
}

// First-order distance to the ellipse boundary (x/a)^2 + (y/b)^2 = 1.
double ellipse_distance(Point p, double a, double b) {
    const double f = std::sqrt((p.x * p.x) / (a * a) + (p.y * p.y) / (b * b));
    if (f < 1e-9) return std::min(a, b);
    const double gx = p.x / (a * a * f), gy = p.y / (b * b * f);
    return std::abs(f - 1.0) / std::sqrt(gx * gx + gy * gy);
}

// Distance from p (relative to the canvas centre) to the outline of shape `shape` (0..8), radius r.
double outline_distance(int shape, Point p, double r) {
    const double s60 = std::sqrt(3.0) / 2.0;
    switch (shape) {
    case 0: return ellipse_distance(p, r, r);
    case 1: return ellipse_distance(p, r, 0.55 * r);
    case 2: return ellipse_distance(p, 0.55 * r, r);
    case 3: return polygon_distance(p, {{0, -r}, {s60 * r, 0.5 * r}, {-s60 * r, 0.5 * r}});
    case 4: return polygon_distance(p, {{0, -r}, {0.5 * r, r}, {-0.5 * r, r}});
    case 5: return polygon_distance(p, {{0, -0.55 * r}, {r, 0.55 * r}, {-r, 0.55 * r}});
    case 6: return polygon_distance(p, {{-0.8 * r, -0.8 * r}, {0.8 * r, -0.8 * r}, {0.8 * r, 0.8 * r}, {-0.8 * r, 0.8 * r}});
    case 7: return polygon_distance(p, {{-0.5 * r, -r}, {0.5 * r, -r}, {0.5 * r, r}, {-0.5 * r, r}});
    case 8: return polygon_distance(p, {{-r, -0.5 * r}, {r, -0.5 * r}, {r, 0.5 * r}, {-r, 0.5 * r}});
    default: throw InputError("unknown shape index");
    }
}

} // namespace

Dataset generate_shapes(int size, std::uint64_t seed) {
    if (size < 32) throw InputError("shape images need size >= 32 to render three distinct stroke widths");
    Dataset ds;
    auto& m = ds.manifest;
    m.name = "simple-shapes";
    m.shape = ImageShape{size, size, 3};
    m.seed = seed;
    m.vocabularies = {{"family", shape_family_names()},
                      {"shape", shape_names()},
                      {"color", color_names()},
                      {"thickness", thickness_names()}};

    const double r = 0.3 * size;
    const double centre = size / 2.0;
    int index = 0;
    for (int shape = 0; shape < 9; ++shape) {
        for (int thickness = 0; thickness < 3; ++thickness) {
            const double half = stroke_width(size, thickness) / 2.0;
            std::vector<char> mask(static_cast<std::size_t>(size) * size, 0);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const Point p{x + 0.5 - centre, y + 0.5 - centre};
                    mask[static_cast<std::size_t>(y) * size + x] = outline_distance(shape, p, r) <= half ? 1 : 0;
                }
            }
            for (int color = 0; color < 5; ++color) {
                ImageRecord rec;
                char id[32];
                std::snprintf(id, sizeof id, "shape_%03d", index++);
                rec.id = id;
                rec.shape = m.shape;
                rec.pixels.assign(m.shape.size(), 255);
                for (std::size_t px = 0; px < mask.size(); ++px) {
                    if (!mask[px]) continue;
                    for (int c = 0; c < 3; ++c) rec.pixels[px * 3 + c] = kColors[static_cast<std::size_t>(color)][c];
                }
                rec.attributes = ShapeAttributes{shape / 3, shape % 3, color, thickness};
                ds.records.push_back(std::move(rec));
            }
        }
    }
    m.count = ds.records.size();

    std::vector<ImageId> ids;
    for (const auto& rec : ds.records) ids.push_back(rec.id);
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    m.test_ids.assign(ids.begin(), ids.begin() + 15);
    m.train_ids.assign(ids.begin() + 15, ids.end());
    std::sort(m.test_ids.begin(), m.test_ids.end());
    std::sort(m.train_ids.begin(), m.train_ids.end());
    return ds;
}

std::vector<ImageRecord> subsample(std::span<const ImageRecord> records, int per_label, std::uint64_t seed) {
    if (per_label < 1) throw InputError("per_label must be >= 1");
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < records.size(); ++i) by_label[records[i].label.value_or(-1)].push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> keep;
    for (auto& [label, idx] : by_label) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t take = std::min(idx.size(), static_cast<std::size_t>(per_label));
        keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::vector<ImageRecord> out;
    out.reserve(keep.size());
    for (std::size_t i : keep) out.push_back(records[i]);
    std::sort(out.begin(), out.end(), [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
    return out;
}

// ---------------------------------------------------------------------------
// Label partitions

std::map<ImageId, int> family_labels(std::span<const ImageRecord> records) {
    std::map<ImageId, int> out;
    for (const auto& r : records) {
        if (!r.attributes) throw InputError("image '" + r.id + "' has no shape attributes");
        out[r.id] = r.attributes->family;
    }
    return out;
}

std::map<ImageId, int> shape_labels(std::span<const ImageRecord> records) {
    std::map<ImageId, int> out;
    for (const auto& r : records) {
        if (!r.attributes) throw InputError("image '" + r.id + "' has no shape attributes");
        out[r.id] = r.attributes->shape();
    }
    return out;
}

std::map<ImageId, int> class_labels(std::span<const ImageRecord> records) {
    std::map<ImageId, int> out;
    for (const auto& r : records) {
        if (r.label) {
            out[r.id] = *r.label;
        } else if (r.attributes) {
            out[r.id] = r.attributes->shape();
        } else {
            throw InputError("image '" + r.id + "' has neither a label nor attributes");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset directory

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw LookupError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

int vocab_index(const std::vector<std::string>& vocab, const std::string& name) {
    auto it = std::find(vocab.begin(), vocab.end(), name);
    if (it == vocab.end()) throw FormatError("attribute value '" + name + "' not in vocabulary");
    return static_cast<int>(it - vocab.begin());
}

} // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    const auto& m = dataset.manifest;
    json records = json::array();
    for (const auto& r : dataset.records) {
        const auto png = encode_png(r);
        const std::string file = "images/" + r.id + ".png";
        std::ofstream os(dir / file, std::ios::binary | std::ios::trunc);
        if (!os) throw InputError("cannot write " + (dir / file).string());
        os.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
        json j{{"id", r.id}, {"file", file}};
        if (r.label) j["label"] = *r.label;
        records.push_back(std::move(j));
    }
    json manifest{{"name", m.name},
                  {"shape", {{"height", m.shape.height}, {"width", m.shape.width}, {"channels", m.shape.channels}}},
                  {"count", dataset.records.size()},
                  {"split", {{"train", m.train_ids}, {"test", m.test_ids}}},
                  {"seed", m.seed},
                  {"vocabularies", m.vocabularies},
                  {"records", records}};
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';

    std::ofstream csv(dir / "attributes.csv", std::ios::trunc);
    csv << "id,family,shape,color,thickness,label\n";
    for (const auto& r : dataset.records) {
        csv << r.id << ',';
        if (r.attributes) {
            const auto& a = *r.attributes;
            csv << shape_family_names()[static_cast<std::size_t>(a.family)] << ','
                << shape_names()[static_cast<std::size_t>(a.shape())] << ','
                << color_names()[static_cast<std::size_t>(a.color)] << ','
                << thickness_names()[static_cast<std::size_t>(a.thickness)];
        } else {
            csv << ",,,";
        }
        csv << ',';
        if (r.label) csv << *r.label;
        csv << '\n';
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    json m;
    {
        std::ifstream is(dir / "manifest.json");
        if (!is) throw LookupError("no manifest.json in " + dir.string());
        try {
            is >> m;
        } catch (const json::exception& e) {
            throw FormatError("manifest.json: " + std::string(e.what()));
        }
    }
    Dataset ds;
    try {
        auto& man = ds.manifest;
        man.name = m.at("name").get<std::string>();
        man.shape = ImageShape{m.at("shape").at("height").get<int>(), m.at("shape").at("width").get<int>(),
                               m.at("shape").at("channels").get<int>()};
        man.count = m.at("count").get<std::size_t>();
        man.train_ids = m.at("split").at("train").get<std::vector<ImageId>>();
        man.test_ids = m.at("split").at("test").get<std::vector<ImageId>>();
        man.seed = m.at("seed").get<std::uint64_t>();
        man.vocabularies = m.at("vocabularies").get<std::map<std::string, std::vector<std::string>>>();
        for (const auto& j : m.at("records")) {
            ImageRecord r = decode_png(read_file(dir / j.at("file").get<std::string>()), j.at("id").get<std::string>());
            if (!(r.shape == man.shape)) throw ConsistencyError("image '" + r.id + "' does not match the manifest shape");
            if (j.contains("label")) r.label = j.at("label").get<int>();
            ds.records.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw FormatError("manifest.json: " + std::string(e.what()));
    }
    if (ds.records.size() != ds.manifest.count) throw ConsistencyError("manifest count does not match its records");

    std::ifstream csv(dir / "attributes.csv");
    if (csv) {
        std::map<ImageId, ImageRecord*> by_id;
        for (auto& r : ds.records) by_id[r.id] = &r;
        std::string line;
        std::getline(csv, line); // header
        while (std::getline(csv, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) f.push_back(cell);
            while (f.size() < 6) f.emplace_back();
            auto it = by_id.find(f[0]);
            if (it == by_id.end()) throw ConsistencyError("attributes.csv names unknown image '" + f[0] + "'");
            if (!f[1].empty()) {
                const int shape = vocab_index(shape_names(), f[2]);
                it->second->attributes = ShapeAttributes{vocab_index(shape_family_names(), f[1]), shape % 3,
                                                         vocab_index(color_names(), f[3]),
                                                         vocab_index(thickness_names(), f[4])};
            }
            if (!f[5].empty()) it->second->label = std::stoi(f[5]);
        }
    }
    return ds;
}

} // namespace afc
