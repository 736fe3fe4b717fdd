#include "dnf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dnf/errors.hpp"
#include "dnf/parallel.hpp"
#include "dnf/rng.hpp"

namespace dnf {

namespace {

using Cplx = std::complex<double>;

bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT over a strided line.
void fft_pow2(Cplx* data, std::size_t n, std::size_t stride) {
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i * stride], data[j * stride]);
    }
    const double pi = std::acos(-1.0);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * pi / static_cast<double>(len);
        const Cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            Cplx w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                Cplx u = data[(i + j) * stride];
                Cplx v = data[(i + j + len / 2) * stride] * w;
                data[(i + j) * stride] = u + v;
                data[(i + j + len / 2) * stride] = u - v;
                w *= wlen;
            }
        }
    }
}

void dft_direct(Cplx* data, std::size_t n, std::size_t stride) {
    const double pi = std::acos(-1.0);
    std::vector<Cplx> in(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = data[i * stride];
    for (std::size_t k = 0; k < n; ++k) {
        Cplx acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * pi * static_cast<double>(k) * static_cast<double>(j) /
                               static_cast<double>(n);
            acc += in[j] * Cplx(std::cos(ang), std::sin(ang));
        }
        data[k * stride] = acc;
    }
}

void fft_line(Cplx* data, std::size_t n, std::size_t stride) {
    if (n == 1) return;
    if (is_pow2(n)) fft_pow2(data, n, stride);
    else dft_direct(data, n, stride);
}

}  // namespace

std::vector<Cplx> fft_2d(const Tensor& plane) {
    if (plane.shape().size() != 2) throw std::invalid_argument("fft_2d expects a 2-D tensor");
    const std::size_t h = plane.rows(), w = plane.cols();
    std::vector<Cplx> f(h * w);
    for (std::size_t i = 0; i < h * w; ++i) f[i] = Cplx(plane.data()[i], 0.0);
    for (std::size_t y = 0; y < h; ++y) fft_line(f.data() + y * w, w, 1);
    for (std::size_t x = 0; x < w; ++x) fft_line(f.data() + x, h, w);
    return f;
}

Tensor log_magnitude_spectrum(const Tensor& plane) {
    const std::size_t h = plane.rows(), w = plane.cols();
    const std::vector<Cplx> f = fft_2d(plane);
    Tensor out(plane.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t sy = (y + h / 2) % h, sx = (x + w / 2) % w;
            out.data()[sy * w + sx] = std::log1p(std::abs(f[y * w + x]));
        }
    return out;
}

SpectrumMap mean_log_spectrum(const std::vector<Tensor>& features) {
    if (features.size() < 2) throw std::invalid_argument("mean_log_spectrum needs at least 2 inputs");
    for (const auto& f : features)
        if (!f.same_shape(features.front()))
            throw std::invalid_argument("mean_log_spectrum inputs must share one shape");
    const std::size_t n = features.size(), dim = features.front().size();
    std::vector<Tensor> maps(n);
    parallel::parallel_for(n, [&](std::size_t i) { maps[i] = log_magnitude_spectrum(features[i]); });

    SpectrumMap out;
    out.count = n;
    out.mean_log = Tensor(features.front().shape());
    out.standard_error = Tensor(features.front().shape());
    for (std::size_t i = 0; i < n; ++i)  // fixed order keeps the mean reproducible
        out.mean_log += maps[i];
    out.mean_log *= 1.0 / static_cast<double>(n);
    for (std::size_t b = 0; b < dim; ++b) {
        double ss = 0.0;
        const double mean = out.mean_log.data()[b];
        for (std::size_t i = 0; i < n; ++i) {
            const double d = maps[i].data()[b] - mean;
            ss += d * d;
        }
        out.standard_error.data()[b] =
            std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    }
    return out;
}

double spectral_flatness(const Tensor& feature) {
    if (feature.shape().size() != 2) throw std::invalid_argument("spectral_flatness expects a 2-D tensor");
    const double first = feature.data()[0];
    bool constant = true;
    for (std::size_t i = 1; i < feature.size(); ++i)
        if (feature.data()[i] != first) {
            constant = false;
            break;
        }
    if (constant) throw MetricError("spectral flatness is undefined for a constant input");

    const std::vector<Cplx> f = fft_2d(feature);
    double log_sum = 0.0, lin_sum = 0.0;
    bool any_zero = false;
    const std::size_t bins = f.size() - 1;  // all but the DC bin at index 0
    for (std::size_t i = 1; i < f.size(); ++i) {
        const double m = std::abs(f[i]);
        lin_sum += m;
        if (m == 0.0) any_zero = true;
        else log_sum += std::log(m);
    }
    if (lin_sum == 0.0) throw MetricError("spectral flatness is undefined: empty spectrum");
    const double am = lin_sum / static_cast<double>(bins);
    const double gm = any_zero ? 0.0 : std::exp(log_sum / static_cast<double>(bins));
    return gm / am;
}

namespace {

// y = Cov x without forming the covariance, minus already-found components.
void cov_matvec(const std::vector<std::vector<double>>& centered, const std::vector<double>& x,
                const std::vector<std::vector<double>>& found, const std::vector<double>& eigs,
                std::vector<double>& y) {
    const std::size_t n = centered.size(), d = x.size();
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* c = centered[i].data();
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += c[j] * x[j];
        dot /= static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j) y[j] += dot * c[j];
    }
    for (std::size_t k = 0; k < found.size(); ++k) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += found[k][j] * x[j];
        dot *= eigs[k];
        for (std::size_t j = 0; j < d; ++j) y[j] -= dot * found[k][j];
    }
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

PcaResult pca_embed(const std::vector<Tensor>& features, int k) {
    if (features.empty()) throw std::invalid_argument("pca_embed needs inputs");
    const std::size_t n = features.size(), d = features.front().size();
    if (k < 1 || static_cast<std::size_t>(k) > d)
        throw std::invalid_argument("component count must be in [1, feature dimension]");
    if (n < static_cast<std::size_t>(k))
        throw std::invalid_argument("need at least k samples");
    for (const auto& f : features)
        if (!f.same_shape(features.front()))
            throw std::invalid_argument("pca_embed inputs must share one shape");

    PcaResult out;
    out.mean = Tensor({d});
    for (const auto& f : features)
        for (std::size_t j = 0; j < d; ++j) out.mean.data()[j] += f.data()[j];
    out.mean *= 1.0 / static_cast<double>(n);

    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            centered[i][j] = features[i].data()[j] - out.mean.data()[j];

    std::vector<std::vector<double>> comps;
    std::vector<double> eigs;
    std::vector<double> v(d), next(d);
    for (int c = 0; c < k; ++c) {
        Rng rng(derive_seed(0x70636121u, static_cast<std::uint64_t>(c)));
        for (std::size_t j = 0; j < d; ++j) v[j] = rng.normal();
        double vn = norm2(v);
        for (std::size_t j = 0; j < d; ++j) v[j] /= vn;
        double eig = 0.0;
        for (int it = 0; it < 20000; ++it) {
            cov_matvec(centered, v, comps, eigs, next);
            const double nn = norm2(next);
            if (nn < 1e-300) break;  // exhausted variance; keep current direction
            double delta = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                next[j] /= nn;
                const double diff = next[j] - v[j];
                delta += diff * diff;
            }
            v = next;
            eig = nn;
            if (std::sqrt(delta) < 1e-13) break;
        }
        // Largest-magnitude loading positive, first index on ties.
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
        if (v[arg] < 0.0)
            for (std::size_t j = 0; j < d; ++j) v[j] = -v[j];
        comps.push_back(v);
        eigs.push_back(eig);
    }

    out.components = Tensor({static_cast<std::size_t>(k), d});
    for (int c = 0; c < k; ++c)
        for (std::size_t j = 0; j < d; ++j)
            out.components.data()[static_cast<std::size_t>(c) * d + j] = comps[static_cast<std::size_t>(c)][j];
    out.eigenvalues = eigs;
    out.coords = Tensor({n, static_cast<std::size_t>(k)});
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < k; ++c) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += centered[i][j] * comps[static_cast<std::size_t>(c)][j];
            out.coords.data()[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] = dot;
        }
    return out;
}

ImageU8 render_map_png(const Tensor& map) {
    if (map.shape().size() != 2) throw std::invalid_argument("render_map_png expects a 2-D tensor");
    double lo = map.data()[0], hi = map.data()[0];
    for (std::size_t i = 1; i < map.size(); ++i) {
        lo = std::min(lo, map.data()[i]);
        hi = std::max(hi, map.data()[i]);
    }
    ImageU8 img;
    img.height = static_cast<int>(map.rows());
    img.width = static_cast<int>(map.cols());
    img.channels = 1;
    img.pixels.resize(map.size());
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        const double v = std::nearbyint((map.data()[i] - lo) / span * 255.0);
        img.pixels[i] = static_cast<std::uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
    }
    return img;
}

}  // namespace dnf
