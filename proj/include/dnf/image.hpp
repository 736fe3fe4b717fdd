#pragma once

#include <cstdint>
#include <vector>

#include "dnf/tensor.hpp"

namespace dnf {

// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int h, int w, int c)
        : height(h), width(w), channels(c),
          pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) *
                 static_cast<std::size_t>(c), 0) {}

    std::size_t size() const { return pixels.size(); }
    std::uint8_t& at(int r, int c, int ch = 0) {
        return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    std::uint8_t at(int r, int c, int ch = 0) const {
        return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
};

// Luminance as doubles in [0, 255]; RGB collapses via Rec. 601 weights.
Tensor to_gray(const ImageU8& img);

// Bilinear resample of a {H, W} tensor.
Tensor resize_bilinear(const Tensor& src, std::size_t out_h, std::size_t out_w);

// [0,255] luminance -> [-1, 1] working range and back.
Tensor to_unit_range(const Tensor& gray);
ImageU8 from_unit_range(const Tensor& t);

}  // namespace dnf
