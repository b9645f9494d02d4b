#pragma once

#include "gccpm/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace gccpm {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB image, rows top to bottom, interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, Rgb fill = {0, 0, 0});

    std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    Rgb rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
    void set(int x, int y, Rgb color);
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Normalised network input, value (p - 128) / 256, so mid-grey maps to zero.
float normalize_pixel(std::uint8_t p);

/// N x 3 x H x W batch; all images must share one size.
Tensor images_to_tensor(const std::vector<const Image*>& images);
Tensor image_to_tensor(const Image& image);

} // namespace gccpm
