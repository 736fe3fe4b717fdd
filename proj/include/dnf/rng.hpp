#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dnf/tensor.hpp"

namespace dnf {

// Deterministic random source. mt19937_64 output is pinned by the standard;
// the uniform and normal transforms below are our own so the full stream is
// bit-reproducible across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift; bias is negligible for the ranges used here.
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Tensor normal_tensor(Shape dims) {
        Tensor t(std::move(dims));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal();
        return t;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stateless seed derivation for independent per-item streams; keeps results
// identical regardless of how work is split across threads.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace dnf
