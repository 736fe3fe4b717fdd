#pragma once

#include <string>
#include <vector>

namespace dnf {

// Diffusion noise schedule. Timesteps are 1-based: betas[t-1] and
// alpha_bars[t-1] belong to step t, and alpha_bars[t-1] is the cumulative
// product of (1 - beta) up to and including step t. Step 0 (alpha_bar = 1)
// is intentionally unrepresented; it is never queried.
//
// Immutable after construction; safe to share across threads.
struct NoiseSchedule {
    int total_steps = 0;  // T
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> betas;       // size T
    std::vector<double> alpha_bars;  // size T, strictly decreasing

    // The deterministic process: sigma_t is 0 at every step.
    static constexpr double kSigma = 0.0;

    double alpha_bar(int t) const;  // t in [1, T]
};

NoiseSchedule make_linear_schedule(int total_steps, double beta_start, double beta_end);

inline NoiseSchedule make_default_schedule() {
    return make_linear_schedule(1000, 1e-4, 0.02);
}

enum class TimestepMode { kUniform, kLogarithmic };

const char* to_string(TimestepMode mode);
TimestepMode timestep_mode_from_string(const std::string& s);

// Strictly increasing subsequence of [1, T] driving accelerated inversion.
// Rounding can collide neighbouring values; duplicates are dropped, so the
// sequence may hold fewer than steps+1 entries.
struct TimestepSequence {
    std::vector<int> taus;
    TimestepMode mode = TimestepMode::kUniform;

    int span() const { return static_cast<int>(taus.size()) - 1; }
};

TimestepSequence sample_timesteps(int total_steps, int steps, TimestepMode mode);

}  // namespace dnf
