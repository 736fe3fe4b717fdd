#include "dnf/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dnf {

Tensor to_gray(const ImageU8& img) {
    if (img.height <= 0 || img.width <= 0)
        throw std::invalid_argument("to_gray: empty image");
    Tensor out({static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double v;
            if (img.channels >= 3) {
                v = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) +
                    0.114 * img.at(r, c, 2);
            } else {
                v = img.at(r, c, 0);
            }
            out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = v;
        }
    }
    return out;
}

Tensor resize_bilinear(const Tensor& src, std::size_t out_h, std::size_t out_w) {
    if (src.shape().size() != 2)
        throw std::invalid_argument("resize: expected a {H, W} tensor");
    const std::size_t h = src.rows(), w = src.cols();
    if (h == 0 || w == 0 || out_h == 0 || out_w == 0)
        throw std::invalid_argument("resize: zero dimension");
    Tensor out({out_h, out_w});
    // Pixel-center alignment; edge clamp.
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        double fy = (static_cast<double>(r) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t c = 0; c < out_w; ++c) {
            double fx = (static_cast<double>(c) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = src.at(y0, x0) * (1.0 - wx) + src.at(y0, x1) * wx;
            const double bot = src.at(y1, x0) * (1.0 - wx) + src.at(y1, x1) * wx;
            out.at(r, c) = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

Tensor to_unit_range(const Tensor& gray) {
    Tensor out = gray;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] / 127.5 - 1.0;
    return out;
}

ImageU8 from_unit_range(const Tensor& t) {
    if (t.shape().size() != 2)
        throw std::invalid_argument("from_unit_range: expected a {H, W} tensor");
    ImageU8 img(static_cast<int>(t.rows()), static_cast<int>(t.cols()), 1);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = std::round((t[i] + 1.0) * 127.5);
        img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return img;
}

}  // namespace dnf
