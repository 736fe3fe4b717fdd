#pragma once

#include <memory>
#include <optional>
#include <string>

#include "dnf/schedule.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// Noise predictor contract: estimate the noise component of x at timestep t.
// Output shape equals input shape, and identical (x, t) must give
// bit-identical output.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual Tensor predict(const Tensor& x, int t, const NoiseSchedule& schedule) const = 0;
    // Stable identifier recorded in provenance / run manifests.
    virtual std::string id() const = 0;
};

// Exact conditional expectation E[eps | x_t = x] for data distributed
// N(mu, sigma2 * I). Serves as the closed-form oracle for everything
// downstream of the predictor contract.
class AnalyticGaussianPredictor final : public NoisePredictor {
public:
    AnalyticGaussianPredictor(double mu, double sigma2);
    // Per-pixel mean tensor variant (broadcast against inputs of the same shape).
    AnalyticGaussianPredictor(Tensor mu, double sigma2);

    Tensor predict(const Tensor& x, int t, const NoiseSchedule& schedule) const override;
    std::string id() const override;

    double sigma2() const { return sigma2_; }

private:
    double mu_scalar_ = 0.0;
    std::optional<Tensor> mu_tensor_;
    double sigma2_ = 1.0;
};

// Predictor returning a constant everywhere; used widely in tests and
// closed-form checks.
class ConstantPredictor final : public NoisePredictor {
public:
    explicit ConstantPredictor(double value) : value_(value) {}
    Tensor predict(const Tensor& x, int t, const NoiseSchedule& schedule) const override;
    std::string id() const override;

private:
    double value_;
};

}  // namespace dnf
