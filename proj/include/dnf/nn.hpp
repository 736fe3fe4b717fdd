#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dnf/rng.hpp"

namespace dnf::nn {

// Minimal CHW conv-net primitives with hand-written backward passes.
// Everything is double precision and strictly deterministic: gradients over a
// batch are always combined in sample order.

struct ConvShape {
    int in_ch, out_ch, ksize, stride, pad;
    int out_dim(int in_dim) const { return (in_dim + 2 * pad - ksize) / stride + 1; }
    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize;
    }
};

// x: {in_ch, H, W}; w: {out_ch, in_ch, k, k}; y: {out_ch, Ho, Wo}.
void conv2d_forward(const double* x, int h, int w, const ConvShape& cs,
                    const double* weight, const double* bias, double* y);

// gx may be null when input gradients are not needed (first layer).
void conv2d_backward(const double* x, int h, int w, const ConvShape& cs,
                     const double* weight, const double* gy,
                     double* gx, double* gweight, double* gbias);

// Naive reference used by tests and the kernel benchmark.
void conv2d_forward_ref(const double* x, int h, int w, const ConvShape& cs,
                        const double* weight, const double* bias, double* y);

void relu_forward(const double* x, std::size_t n, double* y);
void relu_backward(const double* x, const double* gy, std::size_t n, double* gx);

// Mean over each channel plane: x {ch, H, W} -> y {ch}.
void global_avg_pool_forward(const double* x, int ch, int h, int w, double* y);
void global_avg_pool_backward(const double* gy, int ch, int h, int w, double* gx);

// y = W x + b with W {out, in}.
void linear_forward(const double* x, int in, int out, const double* weight,
                    const double* bias, double* y);
void linear_backward(const double* x, int in, int out, const double* weight,
                     const double* gy, double* gx, double* gweight, double* gbias);

// Sinusoidal timestep features of even dimension.
std::vector<double> sinusoidal_embedding(int t, int dim);

// Named parameter tensor with matching gradient and Adam state.
struct Param {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;

    Param(std::string n, std::size_t count) : name(std::move(n)), value(count), grad(count) {}
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

void he_init(Param& p, std::size_t fan_in, Rng& rng);

class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::vector<Param>& params, double lr);

private:
    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace dnf::nn
