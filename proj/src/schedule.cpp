#include "dnf/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace dnf {

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 1 || t > total_steps)
        throw std::invalid_argument("timestep out of range [1, T]");
    return alpha_bars[static_cast<std::size_t>(t) - 1];
}

NoiseSchedule make_linear_schedule(int total_steps, double beta_start, double beta_end) {
    if (total_steps < 1)
        throw std::invalid_argument("schedule: total_steps must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.total_steps = total_steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(static_cast<std::size_t>(total_steps));
    s.alpha_bars.resize(static_cast<std::size_t>(total_steps));

    double prod = 1.0;
    for (int i = 0; i < total_steps; ++i) {
        const double frac = total_steps > 1
                                ? static_cast<double>(i) / static_cast<double>(total_steps - 1)
                                : 0.0;
        const double beta = beta_start + (beta_end - beta_start) * frac;
        s.betas[static_cast<std::size_t>(i)] = beta;
        prod *= 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(i)] = prod;
    }
    return s;
}

const char* to_string(TimestepMode mode) {
    return mode == TimestepMode::kUniform ? "uniform" : "logarithmic";
}

TimestepMode timestep_mode_from_string(const std::string& s) {
    if (s == "uniform") return TimestepMode::kUniform;
    if (s == "logarithmic") return TimestepMode::kLogarithmic;
    throw std::invalid_argument("unknown timestep mode: " + s);
}

TimestepSequence sample_timesteps(int total_steps, int steps, TimestepMode mode) {
    if (total_steps < 1) throw std::invalid_argument("timesteps: T must be >= 1");
    if (steps < 1 || steps > total_steps)
        throw std::invalid_argument("timesteps: need 1 <= S <= T");

    TimestepSequence seq;
    seq.mode = mode;
    seq.taus.reserve(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        double value;
        if (mode == TimestepMode::kUniform) {
            value = 1.0 + static_cast<double>(i) * static_cast<double>(total_steps - 1) /
                              static_cast<double>(steps);
        } else {
            value = std::pow(static_cast<double>(total_steps),
                             static_cast<double>(i) / static_cast<double>(steps));
        }
        int tau = static_cast<int>(std::llround(value));
        if (tau < 1) tau = 1;
        if (tau > total_steps) tau = total_steps;
        if (seq.taus.empty() || tau > seq.taus.back()) seq.taus.push_back(tau);
    }
    return seq;
}

}  // namespace dnf
