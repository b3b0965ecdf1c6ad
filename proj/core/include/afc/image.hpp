#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace afc {

using ImageId = std::string;

/// Height x width x channels, 8 bits per channel, stored row-major HWC.
struct ImageShape {
    int height = 0;
    int width = 0;
    int channels = 0;

    [[nodiscard]] std::size_t size() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }
    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Latent generative attributes of a synthetic shape image, as vocabulary indices.
/// `family` groups the nine shapes into circles, triangles and rectangles; `variant`
/// picks one of three shapes inside a family.
struct ShapeAttributes {
    int family = 0;
    int variant = 0;
    int color = 0;
    int thickness = 0;

    [[nodiscard]] int shape() const { return family * 3 + variant; }
    friend bool operator==(const ShapeAttributes&, const ShapeAttributes&) = default;
};

struct ImageRecord {
    ImageId id;
    ImageShape shape;
    std::vector<std::uint8_t> pixels;
    std::optional<ShapeAttributes> attributes;
    std::optional<int> label;

    [[nodiscard]] std::uint8_t at(int row, int col, int channel) const {
        return pixels[(static_cast<std::size_t>(row) * shape.width + col) * shape.channels + channel];
    }
};

/// Read-only id -> record index over a set of images.
class ImageStore {
public:
    ImageStore() = default;
    explicit ImageStore(std::vector<ImageRecord> records);

    [[nodiscard]] const ImageRecord& at(const ImageId& id) const;
    [[nodiscard]] bool contains(const ImageId& id) const { return index_.contains(id); }
    [[nodiscard]] std::span<const ImageRecord> records() const { return records_; }
    [[nodiscard]] std::size_t size() const { return records_.size(); }
    [[nodiscard]] bool empty() const { return records_.empty(); }
    /// Ids in ascending identifier order.
    [[nodiscard]] std::vector<ImageId> sorted_ids() const;

private:
    std::vector<ImageRecord> records_;
    std::unordered_map<ImageId, std::size_t> index_;
};

} // namespace afc
