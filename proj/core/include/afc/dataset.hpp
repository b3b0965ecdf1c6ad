#pragma once

// Synthetic simple-shapes generation, IDX ingestion and the on-disk dataset layout.

#include <afc/image.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace afc {

struct DatasetManifest {
    std::string name;
    ImageShape shape;
    std::size_t count = 0;
    std::vector<ImageId> train_ids;
    std::vector<ImageId> test_ids;
    std::uint64_t seed = 0;
    /// Attribute name -> vocabulary, e.g. "color" -> {"red", ...}.
    std::map<std::string, std::vector<std::string>> vocabularies;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<ImageRecord> records;
};

/// Vocabularies of the synthetic shapes. shape_names() is indexed by ShapeAttributes::shape().
const std::vector<std::string>& shape_family_names();
const std::vector<std::string>& shape_names();
const std::vector<std::string>& color_names();
const std::vector<std::string>& thickness_names();

/// Renders 9 shapes x 3 stroke thicknesses x 5 colours = 135 outline images of
/// size x size x 3 on a white background, with a seeded 120/15 train/test split.
Dataset generate_shapes(int size = 64, std::uint64_t seed = 0);

/// Stroke width in pixels of thickness index 0..2 at the given canvas size.
int stroke_width(int size, int thickness);

// --- IDX (big-endian) -------------------------------------------------------

struct IdxImages {
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> pixels; // count * rows * cols, row-major
};

/// Magic 0x00000803, then count, rows, cols, then the payload.
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
/// Magic 0x00000801, then count, then one byte per label.
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_idx_images(const IdxImages& images);
std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels);

/// Reads a file; gzip streams (magic 1f 8b) are decompressed transparently.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

/// Pairs an IDX image file with its label file. Records are 28x28x1 for
/// Fashion-MNIST; ids are "idx_" plus the zero-padded index.
Dataset ingest_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Inverse of ingest_idx for records that all carry labels and share one single-channel shape.
void write_idx(std::span<const ImageRecord> records, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

/// Seeded uniform sample of up to per_label records for each label, returned in id order.
std::vector<ImageRecord> subsample(std::span<const ImageRecord> records, int per_label, std::uint64_t seed);

// --- Dataset directory -------------------------------------------------------

/// Writes manifest.json, images/<id>.png and attributes.csv.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<std::uint8_t> encode_png(const ImageRecord& image);
/// Decodes 8-bit gray or RGB PNG data.
ImageRecord decode_png(std::span<const std::uint8_t> data, ImageId id);

/// Label partitions used for evaluation.
std::map<ImageId, int> family_labels(std::span<const ImageRecord> records);
std::map<ImageId, int> shape_labels(std::span<const ImageRecord> records);
std::map<ImageId, int> class_labels(std::span<const ImageRecord> records);

} // namespace afc
