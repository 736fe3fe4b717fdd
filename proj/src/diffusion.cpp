#include "dnf/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace dnf {

StepCoeffs step_coeffs(const NoiseSchedule& schedule, int tau_a, int tau_b) {
    if (tau_a >= tau_b)
        throw std::invalid_argument("step_coeffs: need tau_a < tau_b");
    const double a = schedule.alpha_bar(tau_a);
    const double b = schedule.alpha_bar(tau_b);
    StepCoeffs c;
    c.ratio = std::sqrt(b / a);
    c.eta = std::sqrt((1.0 - b) / b) - std::sqrt((1.0 - a) / a);
    return c;
}

InvertStepResult invert_step(const Tensor& x_a, int tau_a, int tau_b,
                             const NoisePredictor& predictor, const NoiseSchedule& schedule) {
    const StepCoeffs c = step_coeffs(schedule, tau_a, tau_b);
    InvertStepResult r;
    r.eps = predictor.predict(x_a, tau_a, schedule);
    if (!r.eps.same_shape(x_a))
        throw std::invalid_argument("invert_step: predictor violated the shape contract");
    const double sqrt_b = std::sqrt(schedule.alpha_bar(tau_b));
    r.latent = x_a;
    for (std::size_t i = 0; i < r.latent.size(); ++i)
        r.latent[i] = c.ratio * x_a[i] + sqrt_b * c.eta * r.eps[i];
    return r;
}

Tensor generate_step(const Tensor& x_b, int tau_b, int tau_a,
                     const NoisePredictor& predictor, const NoiseSchedule& schedule) {
    if (tau_a >= tau_b)
        throw std::invalid_argument("generate_step: need tau_a < tau_b");
    const double abar_b = schedule.alpha_bar(tau_b);
    const double abar_a = schedule.alpha_bar(tau_a);
    Tensor eps = predictor.predict(x_b, tau_b, schedule);
    if (!eps.same_shape(x_b))
        throw std::invalid_argument("generate_step: predictor violated the shape contract");
    const double sqrt_ratio = std::sqrt(abar_a / abar_b);
    const double sqrt_1mb = std::sqrt(1.0 - abar_b);
    const double sqrt_1ma = std::sqrt(1.0 - abar_a);
    Tensor out = x_b;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = sqrt_ratio * (x_b[i] - sqrt_1mb * eps[i]) + sqrt_1ma * eps[i];
    return out;
}

InversionTrace invert(const Tensor& x0, const TimestepSequence& taus,
                      const NoisePredictor& predictor, const NoiseSchedule& schedule) {
    if (taus.taus.size() < 2)
        throw std::invalid_argument("invert: need at least two subsequence points");
    InversionTrace trace;
    trace.latents.reserve(taus.taus.size());
    trace.noises.reserve(taus.taus.size() - 1);
    trace.latents.push_back(x0);
    for (std::size_t i = 0; i + 1 < taus.taus.size(); ++i) {
        InvertStepResult r = invert_step(trace.latents.back(), taus.taus[i], taus.taus[i + 1],
                                         predictor, schedule);
        trace.noises.push_back(std::move(r.eps));
        trace.latents.push_back(std::move(r.latent));
    }
    return trace;
}

Tensor generate(const Tensor& x_last, const TimestepSequence& taus,
                const NoisePredictor& predictor, const NoiseSchedule& schedule) {
    if (taus.taus.size() < 2)
        throw std::invalid_argument("generate: need at least two subsequence points");
    Tensor x = x_last;
    for (std::size_t i = taus.taus.size() - 1; i > 0; --i)
        x = generate_step(x, taus.taus[i], taus.taus[i - 1], predictor, schedule);
    return x;
}

}  // namespace dnf
