#include <afc/dataset.hpp>
#include <afc/error.hpp>

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace afc {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
           (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> in) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("zlib initialisation failed");
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf;
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            if (rc == Z_BUF_ERROR) throw TruncationError("gzip stream is truncated");
            throw FormatError("corrupt gzip stream");
        }
        out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw TruncationError("gzip stream is truncated");
        }
    }
    inflateEnd(&zs);
    return out;
}

} // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw TruncationError("IDX image file shorter than its magic number");
    if (read_be32(bytes, 0) != kImageMagic) throw FormatError("not an IDX image file (bad magic)");
    if (bytes.size() < 16) throw TruncationError("IDX image header is truncated");
    IdxImages img;
    img.count = read_be32(bytes, 4);
    img.rows = read_be32(bytes, 8);
    img.cols = read_be32(bytes, 12);
    const std::uint64_t payload = static_cast<std::uint64_t>(img.count) * img.rows * img.cols;
    if (bytes.size() - 16 != payload) {
        throw TruncationError("IDX image payload is " + std::to_string(bytes.size() - 16) + " bytes, header declares " +
                              std::to_string(payload));
    }
    img.pixels.assign(bytes.begin() + 16, bytes.end());
    return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw TruncationError("IDX label file shorter than its magic number");
    if (read_be32(bytes, 0) != kLabelMagic) throw FormatError("not an IDX label file (bad magic)");
    if (bytes.size() < 8) throw TruncationError("IDX label header is truncated");
    const std::uint32_t count = read_be32(bytes, 4);
    if (bytes.size() - 8 != count) {
        throw TruncationError("IDX label payload is " + std::to_string(bytes.size() - 8) + " bytes, header declares " +
                              std::to_string(count));
    }
    return {bytes.begin() + 8, bytes.end()};
}

std::vector<std::uint8_t> serialize_idx_images(const IdxImages& images) {
    if (images.pixels.size() != static_cast<std::size_t>(images.count) * images.rows * images.cols) {
        throw InputError("IDX image payload does not match its dimensions");
    }
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.pixels.size());
    write_be32(out, kImageMagic);
    write_be32(out, images.count);
    write_be32(out, images.rows);
    write_be32(out, images.cols);
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    return out;
}

std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LookupError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes);
    return bytes;
}

Dataset ingest_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const IdxImages images = parse_idx_images(read_maybe_gzip(images_path));
    const std::vector<std::uint8_t> labels = parse_idx_labels(read_maybe_gzip(labels_path));
    if (labels.size() != images.count) {
        throw ConsistencyError("IDX files disagree: " + std::to_string(images.count) + " images, " +
                               std::to_string(labels.size()) + " labels");
    }
    Dataset ds;
    ds.manifest.name = images_path.filename().string();
    ds.manifest.shape = ImageShape{static_cast<int>(images.rows), static_cast<int>(images.cols), 1};
    ds.manifest.count = images.count;
    const std::size_t plane = static_cast<std::size_t>(images.rows) * images.cols;
    const int width = images.count > 0 ? static_cast<int>(std::to_string(images.count - 1).size()) : 1;
    std::vector<std::string> vocab;
    std::uint8_t max_label = 0;
    for (std::uint32_t i = 0; i < images.count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "idx_%0*u", std::max(width, 5), i);
        ImageRecord r;
        r.id = id;
        r.shape = ds.manifest.shape;
        r.pixels.assign(images.pixels.begin() + static_cast<std::ptrdiff_t>(i * plane),
                        images.pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
        r.label = labels[i];
        max_label = std::max(max_label, labels[i]);
        ds.manifest.train_ids.push_back(r.id);
        ds.records.push_back(std::move(r));
    }
    for (int l = 0; l <= max_label && images.count > 0; ++l) vocab.push_back(std::to_string(l));
    ds.manifest.vocabularies["label"] = vocab;
    return ds;
}

void write_idx(std::span<const ImageRecord> records, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
    IdxImages img;
    std::vector<std::uint8_t> labels;
    if (!records.empty()) {
        const auto& s = records.front().shape;
        if (s.channels != 1) throw InputError("IDX export needs single-channel images");
        img.rows = static_cast<std::uint32_t>(s.height);
        img.cols = static_cast<std::uint32_t>(s.width);
    }
    for (const auto& r : records) {
        if (!(r.shape == records.front().shape)) throw InputError("IDX export needs a common image shape");
        if (!r.label || *r.label < 0 || *r.label > 255) throw InputError("IDX export needs 8-bit labels on every record");
        img.pixels.insert(img.pixels.end(), r.pixels.begin(), r.pixels.end());
        labels.push_back(static_cast<std::uint8_t>(*r.label));
    }
    img.count = static_cast<std::uint32_t>(records.size());
    const auto write = [](const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
        std::ofstream os(p, std::ios::binary | std::ios::trunc);
        if (!os) throw InputError("cannot write " + p.string());
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    };
    write(images_path, serialize_idx_images(img));
    write(labels_path, serialize_idx_labels(labels));
}

} // namespace afc
