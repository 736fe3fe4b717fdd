#include "dnf/perturb.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "dnf/errors.hpp"
#include "dnf/parallel.hpp"

namespace dnf {

std::string spec_label(const PerturbationSpec& spec) {
    if (spec.kind == PerturbationSpec::Kind::kBlur) {
        const double s = spec.parameter;
        if (s == static_cast<double>(static_cast<long long>(s)))
            return "blur:" + std::to_string(static_cast<long long>(s));
        return "blur:" + std::to_string(s);
    }
    return "jpeg:" + std::to_string(static_cast<long long>(spec.parameter));
}

namespace {

std::vector<double> blur_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(radius) + 1);  // k[i] = weight at offset i
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i)
        total += std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    for (int i = 0; i <= radius; ++i)
        k[static_cast<std::size_t>(i)] =
            std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma)) / total;
    return k;
}

// Symmetric reflection: -1 -> 0, n -> n-1; folds until in range.
std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// One pass along a line. Each tap pair (x-i, x+i) is added before scaling so
// that mirroring the line mirrors the output bit-exactly (a+b equals b+a).
void blur_line(const double* in, std::ptrdiff_t n, std::ptrdiff_t stride,
               const std::vector<double>& k, double* out, std::ptrdiff_t out_stride) {
    const auto radius = static_cast<std::ptrdiff_t>(k.size()) - 1;
    for (std::ptrdiff_t x = 0; x < n; ++x) {
        double acc = k[0] * in[x * stride];
        for (std::ptrdiff_t i = 1; i <= radius; ++i) {
            const double left = in[reflect(x - i, n) * stride];
            const double right = in[reflect(x + i, n) * stride];
            acc += k[static_cast<std::size_t>(i)] * (left + right);
        }
        out[x * out_stride] = acc;
    }
}

}  // namespace

Tensor blur_f64(const Tensor& plane, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("blur sigma must be >= 0");
    if (plane.shape().size() != 2) throw std::invalid_argument("blur expects a 2-D tensor");
    if (sigma == 0.0) return plane;
    const auto h = static_cast<std::ptrdiff_t>(plane.rows());
    const auto w = static_cast<std::ptrdiff_t>(plane.cols());
    const std::vector<double> k = blur_kernel(sigma);
    Tensor mid(plane.shape()), out(plane.shape());
    for (std::ptrdiff_t y = 0; y < h; ++y)  // horizontal pass
        blur_line(plane.data() + y * w, w, 1, k, mid.data() + y * w, 1);
    for (std::ptrdiff_t x = 0; x < w; ++x)  // vertical pass
        blur_line(mid.data() + x, h, w, k, out.data() + x, w);
    return out;
}

ImageU8 gaussian_blur(const ImageU8& image, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("blur sigma must be >= 0");
    if (sigma == 0.0) return image;
    ImageU8 out = image;
    const std::size_t n = static_cast<std::size_t>(image.height) * image.width;
    Tensor plane({static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width)});
    for (int c = 0; c < image.channels; ++c) {
        for (std::size_t i = 0; i < n; ++i)
            plane.data()[i] = static_cast<double>(image.pixels[i * image.channels + c]);
        const Tensor blurred = blur_f64(plane, sigma);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = std::nearbyint(blurred.data()[i]);
            out.pixels[i * image.channels + c] =
                static_cast<std::uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
        }
    }
    return out;
}

namespace {

// ITU T.81 Annex K.1 luminance quantization table, row-major.
constexpr int kBaseTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,
    12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,
    14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,
    24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
};

struct DctBasis {
    // t[u][x] = alpha(u) cos((2x+1) u pi / 16); orthonormal rows.
    std::array<std::array<double, 8>, 8> t;
    DctBasis() {
        const double pi = std::acos(-1.0);
        for (int u = 0; u < 8; ++u) {
            const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x)
                t[static_cast<std::size_t>(u)][static_cast<std::size_t>(x)] =
                    alpha * std::cos((2.0 * x + 1.0) * u * pi / 16.0);
        }
    }
};

const DctBasis& dct_basis() {
    static const DctBasis basis;
    return basis;
}

void dct8x8(const double* in, double* out) {
    const auto& t = dct_basis().t;
    double tmp[64];
    for (int u = 0; u < 8; ++u)  // rows
        for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int i = 0; i < 8; ++i) acc += t[u][i] * in[x * 8 + i];
            tmp[x * 8 + u] = acc;
        }
    for (int v = 0; v < 8; ++v)  // columns
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int i = 0; i < 8; ++i) acc += t[v][i] * tmp[i * 8 + u];
            out[v * 8 + u] = acc;
        }
}

void idct8x8(const double* in, double* out) {
    const auto& t = dct_basis().t;
    double tmp[64];
    for (int x = 0; x < 8; ++x)  // columns: transpose multiply
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int i = 0; i < 8; ++i) acc += t[i][x] * in[i * 8 + u];
            tmp[x * 8 + u] = acc;
        }
    for (int y = 0; y < 8; ++y)  // rows
        for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int i = 0; i < 8; ++i) acc += t[i][x] * tmp[y * 8 + i];
            out[y * 8 + x] = acc;
        }
}

}  // namespace

std::vector<int> jpeg_quant_table(int quality) {
    if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must be in [1, 100]");
    const double scale = quality >= 50 ? 200.0 - 2.0 * quality : 5000.0 / quality;
    std::vector<int> table(64);
    for (int i = 0; i < 64; ++i) {
        const auto q = static_cast<long long>(std::llround(kBaseTable[i] * scale / 100.0));
        table[static_cast<std::size_t>(i)] = static_cast<int>(q < 1 ? 1 : (q > 255 ? 255 : q));
    }
    return table;
}

ImageU8 jpeg_roundtrip(const ImageU8& image, int quality) {
    const std::vector<int> q = jpeg_quant_table(quality);
    const int bh = (image.height + 7) / 8, bw = (image.width + 7) / 8;
    ImageU8 out = image;
    std::vector<double> block(64), coef(64), rec(64);
    for (int c = 0; c < image.channels; ++c) {
        for (int by = 0; by < bh; ++by)
            for (int bx = 0; bx < bw; ++bx) {
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        // Edge replication pads partial border blocks.
                        const int sy = std::min(by * 8 + y, image.height - 1);
                        const int sx = std::min(bx * 8 + x, image.width - 1);
                        block[static_cast<std::size_t>(y * 8 + x)] =
                            static_cast<double>(image.at(sy, sx, c)) - 128.0;
                    }
                dct8x8(block.data(), coef.data());
                for (int i = 0; i < 64; ++i) {
                    const double qv = static_cast<double>(q[static_cast<std::size_t>(i)]);
                    coef[static_cast<std::size_t>(i)] =
                        static_cast<double>(std::llround(coef[static_cast<std::size_t>(i)] / qv)) * qv;
                }
                idct8x8(coef.data(), rec.data());
                for (int y = 0; y < 8; ++y) {
                    const int sy = by * 8 + y;
                    if (sy >= image.height) break;
                    for (int x = 0; x < 8; ++x) {
                        const int sx = bx * 8 + x;
                        if (sx >= image.width) break;
                        const double v = std::nearbyint(rec[static_cast<std::size_t>(y * 8 + x)] + 128.0);
                        out.at(sy, sx, c) =
                            static_cast<std::uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
                    }
                }
            }
    }
    return out;
}

ImageU8 apply_perturbation(const ImageU8& image, const PerturbationSpec& spec) {
    if (spec.kind == PerturbationSpec::Kind::kBlur) return gaussian_blur(image, spec.parameter);
    return jpeg_roundtrip(image, static_cast<int>(spec.parameter));
}

std::vector<SweepRow> perturbation_sweep(const std::vector<ImageU8>& images,
                                         const std::vector<int>& labels,
                                         const DetectorModel& detector,
                                         const ExtractConfig& config,
                                         const std::vector<PerturbationSpec>& specs) {
    if (images.size() != labels.size()) throw std::invalid_argument("images/labels size mismatch");
    if (specs.empty()) throw std::invalid_argument("no perturbation specs");
    std::vector<SweepRow> rows;
    rows.reserve(specs.size());
    for (const auto& spec : specs) {
        std::vector<double> scores(images.size());
        std::vector<std::uint8_t> ok(images.size(), 0);
        parallel::parallel_for(images.size(), [&](std::size_t i) {
            try {
                const ImageU8 perturbed = apply_perturbation(images[i], spec);
                const DnfFeature feature = extract_dnf(perturbed, config);
                scores[i] = predict_score(detector, feature.values);
                ok[i] = 1;
            } catch (const std::exception&) {
                ok[i] = 0;
            }
        });
        SweepRow row;
        row.spec = spec;
        std::vector<double> kept_scores;
        std::vector<int> kept_labels;
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (ok[i]) {
                kept_scores.push_back(scores[i]);
                kept_labels.push_back(labels[i]);
            } else {
                ++row.failures;
            }
        }
        if (kept_scores.empty()) throw MetricError("all items failed for " + spec_label(spec));
        row.report.scores = kept_scores;
        row.report.labels = kept_labels;
        for (int l : kept_labels) {
            if (l == 0) ++row.report.count_real;
            else ++row.report.count_generated;
        }
        row.report.accuracy = accuracy(kept_scores, kept_labels, detector.threshold);
        row.report.average_precision = average_precision(kept_scores, kept_labels);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_to_json(const std::vector<SweepRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& row : rows) {
        arr.push_back(nlohmann::json{
            {"spec", spec_label(row.spec)},
            {"kind", row.spec.kind == PerturbationSpec::Kind::kBlur ? "blur" : "jpeg"},
            {"parameter", row.spec.parameter},
            {"accuracy", row.report.accuracy},
            {"average_precision", row.report.average_precision},
            {"n", row.report.scores.size()},
            {"failures", row.failures},
        });
    }
    return arr.dump(2) + "\n";
}

}  // namespace dnf
