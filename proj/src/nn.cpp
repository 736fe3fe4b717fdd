#include "dnf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dnf/parallel.hpp"

namespace dnf::nn {

namespace {

// Output positions whose input tap oy*stride - pad + k_off lands inside [0, in_dim).
void tap_range(int in_dim, int k_off, int stride, int pad, int out_dim, int& lo, int& hi) {
    int num = pad - k_off;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    int top = in_dim - 1 + pad - k_off;
    hi = top < 0 ? -1 : std::min(out_dim - 1, top / stride);
}

}  // namespace

void conv2d_forward(const double* x, int h, int w, const ConvShape& cs,
                    const double* weight, const double* bias, double* y) {
    const int ho = cs.out_dim(h), wo = cs.out_dim(w);
    const std::size_t plane_in = static_cast<std::size_t>(h) * w;
    const std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
    parallel::parallel_for(static_cast<std::size_t>(cs.out_ch), [&](std::size_t oc) {
        double* yp = y + oc * plane_out;
        std::fill(yp, yp + plane_out, bias[oc]);
        for (int ic = 0; ic < cs.in_ch; ++ic) {
            const double* xp = x + ic * plane_in;
            const double* wp = weight + ((oc * cs.in_ch + ic) * cs.ksize) * cs.ksize;
            for (int ky = 0; ky < cs.ksize; ++ky) {
                int oy_lo, oy_hi;
                tap_range(h, ky, cs.stride, cs.pad, ho, oy_lo, oy_hi);
                for (int kx = 0; kx < cs.ksize; ++kx) {
                    const double wv = wp[ky * cs.ksize + kx];
                    if (wv == 0.0) continue;
                    int ox_lo, ox_hi;
                    tap_range(w, kx, cs.stride, cs.pad, wo, ox_lo, ox_hi);
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const double* xr = xp + static_cast<std::size_t>(oy * cs.stride - cs.pad + ky) * w;
                        double* yr = yp + static_cast<std::size_t>(oy) * wo;
                        for (int ox = ox_lo; ox <= ox_hi; ++ox)
                            yr[ox] += wv * xr[ox * cs.stride - cs.pad + kx];
                    }
                }
            }
        }
    });
}

void conv2d_forward_ref(const double* x, int h, int w, const ConvShape& cs,
                        const double* weight, const double* bias, double* y) {
    const int ho = cs.out_dim(h), wo = cs.out_dim(w);
    for (int oc = 0; oc < cs.out_ch; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = bias[oc];
                for (int ic = 0; ic < cs.in_ch; ++ic)
                    for (int ky = 0; ky < cs.ksize; ++ky)
                        for (int kx = 0; kx < cs.ksize; ++kx) {
                            int iy = oy * cs.stride - cs.pad + ky;
                            int ix = ox * cs.stride - cs.pad + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += weight[((static_cast<std::size_t>(oc) * cs.in_ch + ic) * cs.ksize + ky) * cs.ksize + kx] *
                                   x[(static_cast<std::size_t>(ic) * h + iy) * w + ix];
                        }
                y[(static_cast<std::size_t>(oc) * ho + oy) * wo + ox] = acc;
            }
}

void conv2d_backward(const double* x, int h, int w, const ConvShape& cs,
                     const double* weight, const double* gy,
                     double* gx, double* gweight, double* gbias) {
    const int ho = cs.out_dim(h), wo = cs.out_dim(w);
    const std::size_t plane_in = static_cast<std::size_t>(h) * w;
    const std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
    for (int oc = 0; oc < cs.out_ch; ++oc) {
        const double* gyp = gy + oc * plane_out;
        double bacc = 0.0;
        for (std::size_t i = 0; i < plane_out; ++i) bacc += gyp[i];
        gbias[oc] += bacc;
        for (int ic = 0; ic < cs.in_ch; ++ic) {
            const double* xp = x + ic * plane_in;
            double* gxp = gx ? gx + ic * plane_in : nullptr;
            const std::size_t wbase = ((static_cast<std::size_t>(oc) * cs.in_ch + ic) * cs.ksize) * cs.ksize;
            for (int ky = 0; ky < cs.ksize; ++ky) {
                int oy_lo, oy_hi;
                tap_range(h, ky, cs.stride, cs.pad, ho, oy_lo, oy_hi);
                for (int kx = 0; kx < cs.ksize; ++kx) {
                    int ox_lo, ox_hi;
                    tap_range(w, kx, cs.stride, cs.pad, wo, ox_lo, ox_hi);
                    const double wv = weight[wbase + ky * cs.ksize + kx];
                    double wacc = 0.0;
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const std::size_t in_row = static_cast<std::size_t>(oy * cs.stride - cs.pad + ky) * w;
                        const double* gyr = gyp + static_cast<std::size_t>(oy) * wo;
                        for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                            const int ix = ox * cs.stride - cs.pad + kx;
                            wacc += gyr[ox] * xp[in_row + ix];
                            if (gxp) gxp[in_row + ix] += wv * gyr[ox];
                        }
                    }
                    gweight[wbase + ky * cs.ksize + kx] += wacc;
                }
            }
        }
    }
}

void relu_forward(const double* x, std::size_t n, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* gy, std::size_t n, double* gx) {
    for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
}

void global_avg_pool_forward(const double* x, int ch, int h, int w, double* y) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        const double* xp = x + c * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += xp[i];
        y[c] = acc / static_cast<double>(plane);
    }
}

void global_avg_pool_backward(const double* gy, int ch, int h, int w, double* gx) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < ch; ++c) {
        const double g = gy[c] / static_cast<double>(plane);
        double* gxp = gx + c * plane;
        for (std::size_t i = 0; i < plane; ++i) gxp[i] = g;
    }
}

void linear_forward(const double* x, int in, int out, const double* weight,
                    const double* bias, double* y) {
    for (int o = 0; o < out; ++o) {
        double acc = bias[o];
        const double* wp = weight + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += wp[i] * x[i];
        y[o] = acc;
    }
}

void linear_backward(const double* x, int in, int out, const double* weight,
                     const double* gy, double* gx, double* gweight, double* gbias) {
    if (gx) std::fill(gx, gx + in, 0.0);
    for (int o = 0; o < out; ++o) {
        gbias[o] += gy[o];
        const double* wp = weight + static_cast<std::size_t>(o) * in;
        double* gwp = gweight + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
            gwp[i] += gy[o] * x[i];
            if (gx) gx[i] += gy[o] * wp[i];
        }
    }
}

std::vector<double> sinusoidal_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("embedding dim must be even and >= 2");
    const int half = dim / 2;
    std::vector<double> emb(dim);
    for (int k = 0; k < half; ++k) {
        const double freq = half == 1 ? 1.0 : std::exp(-std::log(10000.0) * k / (half - 1));
        emb[2 * k] = std::sin(t * freq);
        emb[2 * k + 1] = std::cos(t * freq);
    }
    return emb;
}

void he_init(Param& p, std::size_t fan_in, Rng& rng) {
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : p.value) v = scale * rng.normal();
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<Param>& params, double lr) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.value.size(), 0.0);
            v_.emplace_back(p.value.size(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * p.grad[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * p.grad[i] * p.grad[i];
            p.value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

}  // namespace dnf::nn
