#include "dnf/predictor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dnf {

AnalyticGaussianPredictor::AnalyticGaussianPredictor(double mu, double sigma2)
    : mu_scalar_(mu), sigma2_(sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("analytic predictor: sigma2 must be > 0");
}

AnalyticGaussianPredictor::AnalyticGaussianPredictor(Tensor mu, double sigma2)
    : mu_tensor_(std::move(mu)), sigma2_(sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("analytic predictor: sigma2 must be > 0");
}

Tensor AnalyticGaussianPredictor::predict(const Tensor& x, int t,
                                          const NoiseSchedule& schedule) const {
    const double a = schedule.alpha_bar(t);  // validates t
    if (mu_tensor_ && !mu_tensor_->same_shape(x))
        throw std::invalid_argument("analytic predictor: mu shape does not match input");

    const double sqrt_a = std::sqrt(a);
    const double one_minus_a = 1.0 - a;
    const double denom = a * sigma2_ + one_minus_a;
    const double inv_sqrt_1ma = 1.0 / std::sqrt(one_minus_a);

    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double mu = mu_tensor_ ? (*mu_tensor_)[i] : mu_scalar_;
        // Posterior mean of x0 given x_t = x, then the implied noise.
        const double m = (sqrt_a * sigma2_ * x[i] + one_minus_a * mu) / denom;
        out[i] = (x[i] - sqrt_a * m) * inv_sqrt_1ma;
    }
    return out;
}

std::string AnalyticGaussianPredictor::id() const {
    std::ostringstream os;
    os << "analytic:mu=";
    if (mu_tensor_)
        os << "tensor";
    else
        os << mu_scalar_;
    os << ",sigma2=" << sigma2_;
    return os.str();
}

Tensor ConstantPredictor::predict(const Tensor& x, int t, const NoiseSchedule& schedule) const {
    schedule.alpha_bar(t);  // range check
    return Tensor::full(x.shape(), value_);
}

std::string ConstantPredictor::id() const {
    std::ostringstream os;
    os << "constant:" << value_;
    return os.str();
}

}  // namespace dnf
