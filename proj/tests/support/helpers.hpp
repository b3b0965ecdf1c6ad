#pragma once

#include <afc/dataset.hpp>
#include <afc/model.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace helpers {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("afc-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

inline afc::Tensor random_tensor(const afc::TensorShape& shape, std::mt19937_64& rng) {
    return afc::Tensor{shape, random_values(shape.size(), rng)};
}

/// Random gray image record of the given size.
inline afc::ImageRecord random_image(const std::string& id, int h, int w, int c, std::mt19937_64& rng) {
    afc::ImageRecord r;
    r.id = id;
    r.shape = {h, w, c};
    r.pixels.resize(r.shape.size());
    std::uniform_int_distribution<int> u(0, 255);
    for (auto& p : r.pixels) p = static_cast<std::uint8_t>(u(rng));
    return r;
}

inline const afc::Dataset& shapes32() {
    static const afc::Dataset d = afc::generate_shapes(32, 0);
    return d;
}

inline const afc::Dataset& shapes64() {
    static const afc::Dataset d = afc::generate_shapes(64, 0);
    return d;
}

} // namespace helpers
