#pragma once

#include <string>
#include <vector>

#include "dnf/detector.hpp"
#include "dnf/dnf.hpp"
#include "dnf/image.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

struct PerturbationSpec {
    enum class Kind { kBlur, kJpeg } kind = Kind::kBlur;
    double parameter = 0.0;  // blur sigma >= 0, or jpeg quality in [1, 100]
};

std::string spec_label(const PerturbationSpec& spec);

// Separable Gaussian blur, radius ceil(3 sigma), symmetric reflect padding.
// The double-precision variant is the core; the 8-bit wrapper blurs each
// channel and rounds to nearest afterwards. sigma = 0 is the identity.
Tensor blur_f64(const Tensor& plane, double sigma);
ImageU8 gaussian_blur(const ImageU8& image, double sigma);

// Baseline JPEG quantization round-trip on each channel: level shift, 8x8
// DCT-II, Annex-K luminance table scaled by the conventional quality mapping,
// dequantize, inverse DCT, clamp. No entropy coding (lossless, irrelevant).
ImageU8 jpeg_roundtrip(const ImageU8& image, int quality);

std::vector<int> jpeg_quant_table(int quality);

ImageU8 apply_perturbation(const ImageU8& image, const PerturbationSpec& spec);

struct SweepRow {
    PerturbationSpec spec;
    EvalReport report;
    std::size_t failures = 0;
};

// For each spec: perturb every image, extract its feature, evaluate the
// detector. Per-item failures are recorded and the sweep continues.
std::vector<SweepRow> perturbation_sweep(const std::vector<ImageU8>& images,
                                         const std::vector<int>& labels,
                                         const DetectorModel& detector,
                                         const ExtractConfig& config,
                                         const std::vector<PerturbationSpec>& specs);

std::string sweep_to_json(const std::vector<SweepRow>& rows);

}  // namespace dnf
