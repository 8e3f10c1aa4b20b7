#pragma once
/**
 * @file image.hpp
 * @brief 8-bit grayscale image container with binary PGM (P5) I/O.
 */

#include <cstdint>
#include <string>
#include <vector>

namespace pvloc {

struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    ImageU8() = default;
    ImageU8(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    bool empty() const { return width == 0 || height == 0; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    std::uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

    /// Bilinear sample with border clamp.
    double sample(double x, double y) const;
};

/// Float image for gradients and intermediate filtering.
struct ImageF32 {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    ImageF32() = default;
    ImageF32(int w, int h, float fill = 0.f)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    bool empty() const { return width == 0 || height == 0; }
    float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

ImageF32 to_float(const ImageU8& img);
ImageU8 to_u8(const ImageF32& img);

/// Area-averaged downscale to max(width, height) == max_dim; returns the input
/// unchanged (scale 1) when it is already small enough.
ImageU8 resize_to_max_dim(const ImageU8& img, int max_dim, double* scale_out = nullptr);

void write_pgm(const ImageU8& img, const std::string& path);
ImageU8 read_pgm(const std::string& path);

}  // namespace pvloc
