#include <afc/dataset.hpp>
#include <afc/error.hpp>

#include <png.h>

#include <cstring>

namespace afc {

std::vector<std::uint8_t> encode_png(const ImageRecord& image) {
    const auto& s = image.shape;
    if (s.channels != 1 && s.channels != 3) throw InputError("PNG export supports 1 or 3 channels");
    if (image.pixels.size() != s.size()) throw InputError("image '" + image.id + "' has inconsistent pixel count");
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(s.width);
    img.height = static_cast<png_uint_32>(s.height);
    img.format = s.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw FormatError(std::string("PNG encode failed: ") + img.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw FormatError(std::string("PNG encode failed: ") + img.message);
    }
    out.resize(size);
    return out;
}

ImageRecord decode_png(std::span<const std::uint8_t> data, ImageId id) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, data.data(), data.size())) {
        throw FormatError("PNG decode failed for '" + id + "': " + img.message);
    }
    const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    ImageRecord rec;
    rec.id = std::move(id);
    rec.shape = ImageShape{static_cast<int>(img.height), static_cast<int>(img.width), gray ? 1 : 3};
    rec.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, rec.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw FormatError("PNG decode failed for '" + rec.id + "': " + img.message);
    }
    return rec;
}

} // namespace afc
