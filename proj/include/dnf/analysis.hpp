#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "dnf/image.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// Unnormalized forward 2-D DFT, row-major H x W bins; radix-2 FFT on
// power-of-two lines, direct evaluation otherwise.
std::vector<std::complex<double>> fft_2d(const Tensor& plane);

// log(1 + |F|) with the zero-frequency bin shifted to the center.
Tensor log_magnitude_spectrum(const Tensor& plane);

struct SpectrumMap {
    Tensor mean_log;        // mean log(1+|F|), origin-centered
    Tensor standard_error;  // per-bin standard error of that mean
    std::size_t count = 0;
};

SpectrumMap mean_log_spectrum(const std::vector<Tensor>& features);

// Geometric over arithmetic mean of the non-DC magnitude bins: near 1 for
// white noise, near 0 for tonal content. Constant input is undefined.
double spectral_flatness(const Tensor& feature);

struct PcaResult {
    Tensor coords;                    // n x k projections of centered inputs
    Tensor components;                // k x d principal directions, unit norm
    Tensor mean;                      // d
    std::vector<double> eigenvalues;  // descending
};

// Top-k principal directions by power iteration with deflation. Sign fixed so
// each component's largest-magnitude loading is positive.
PcaResult pca_embed(const std::vector<Tensor>& features, int k);

// Min-max normalized 8-bit rendering of a 2-D map.
ImageU8 render_map_png(const Tensor& map);

}  // namespace dnf
