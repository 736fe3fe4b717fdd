#pragma once

#include <vector>

#include "dnf/predictor.hpp"
#include "dnf/schedule.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

// Coefficients for one deterministic step between subsequence points
// tau_a < tau_b, written so that inversion is
//   x_b = sqrt(abar_b) * (x_a / sqrt(abar_a) + eta * eps).
// eta carries the minus-sign form; the plus-sign variant breaks the exact
// single-step round trip (see tests).
struct StepCoeffs {
    double ratio;  // sqrt(abar_b / abar_a), in (0,1) for tau_a < tau_b
    double eta;    // sqrt((1-abar_b)/abar_b) - sqrt((1-abar_a)/abar_a), > 0
};

StepCoeffs step_coeffs(const NoiseSchedule& schedule, int tau_a, int tau_b);

// Noise-ward step: x at tau_a -> x at tau_b (tau_a < tau_b). Returns the new
// latent and the predicted noise consumed by the step.
struct InvertStepResult {
    Tensor latent;
    Tensor eps;
};

InvertStepResult invert_step(const Tensor& x_a, int tau_a, int tau_b,
                             const NoisePredictor& predictor, const NoiseSchedule& schedule);

// Data-ward step: x at tau_b -> x at tau_a (tau_a < tau_b), sigma = 0.
Tensor generate_step(const Tensor& x_b, int tau_b, int tau_a,
                     const NoisePredictor& predictor, const NoiseSchedule& schedule);

// Full inversion record: latents[0] is the input image, latents[i+1] the
// latent after step i, noises[i] the predicted noise at latents[i].
struct InversionTrace {
    std::vector<Tensor> latents;  // S+1 entries
    std::vector<Tensor> noises;   // S entries
};

InversionTrace invert(const Tensor& x0, const TimestepSequence& taus,
                      const NoisePredictor& predictor, const NoiseSchedule& schedule);

Tensor generate(const Tensor& x_last, const TimestepSequence& taus,
                const NoisePredictor& predictor, const NoiseSchedule& schedule);

}  // namespace dnf
