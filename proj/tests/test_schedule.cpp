#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dnf/rng.hpp"
#include "dnf/schedule.hpp"

using dnf::make_linear_schedule;
using dnf::sample_timesteps;
using dnf::TimestepMode;

TEST_CASE("linear schedule hand values T=4") {
    const auto s = make_linear_schedule(4, 0.1, 0.4);
    REQUIRE(s.betas.size() == 4);
    const double betas[4] = {0.1, 0.2, 0.3, 0.4};
    const double abars[4] = {0.9, 0.72, 0.504, 0.3024};
    for (int i = 0; i < 4; ++i) {
        CHECK(s.betas[i] == doctest::Approx(betas[i]).epsilon(1e-15));
        CHECK(s.alpha_bars[i] == doctest::Approx(abars[i]).epsilon(1e-14));
    }
    CHECK(s.alpha_bar(1) == s.alpha_bars[0]);
    CHECK(s.alpha_bar(4) == s.alpha_bars[3]);
}

TEST_CASE("single step near-zero beta gives alpha_bar near one") {
    const auto s = make_linear_schedule(1, 1e-12, 1e-12);
    REQUIRE(s.alpha_bars.size() == 1);
    CHECK(s.alpha_bars[0] == doctest::Approx(1.0).epsilon(1e-11));
    CHECK(s.alpha_bars[0] < 1.0);
}

TEST_CASE("default schedule matches exact-rational product oracle") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    REQUIRE(s.alpha_bars.size() == 1000);
    // Values computed independently with exact rational arithmetic over the
    // same inclusive endpoint interpolation, then rounded to double.
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-15));
    CHECK(s.alpha_bar(500) == doctest::Approx(0.07858724288177824).epsilon(1e-12));
    CHECK(s.alpha_bar(1000) == doctest::Approx(4.0358297653756835e-05).epsilon(1e-12));
    for (std::size_t i = 1; i < s.alpha_bars.size(); ++i) {
        CHECK(s.alpha_bars[i] < s.alpha_bars[i - 1]);
        CHECK(s.alpha_bars[i] > 0.0);
        CHECK(s.alpha_bars[i] < 1.0);
    }
}

TEST_CASE("sigma policy is deterministic zero") {
    CHECK(dnf::NoiseSchedule::kSigma == 0.0);
}

TEST_CASE("alpha_bars reconstruct from betas within 1e-12 relative") {
    for (const auto& s : {make_linear_schedule(1000, 1e-4, 0.02),
                          make_linear_schedule(37, 0.003, 0.4),
                          make_linear_schedule(2, 0.5, 0.5)}) {
        double prod = 1.0;
        for (std::size_t i = 0; i < s.betas.size(); ++i) {
            prod *= 1.0 - s.betas[i];
            CHECK(std::abs(prod - s.alpha_bars[i]) <= 1e-12 * std::abs(s.alpha_bars[i]));
        }
    }
}

TEST_CASE("schedule parameter errors") {
    CHECK_THROWS_AS(make_linear_schedule(0, 1e-4, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, -0.1, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.02, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 1e-4, 1.0), std::invalid_argument);
    const auto s = make_linear_schedule(10, 1e-4, 0.02);
    CHECK_THROWS_AS(s.alpha_bar(0), std::invalid_argument);
    CHECK_THROWS_AS(s.alpha_bar(11), std::invalid_argument);
}

TEST_CASE("timestep subsequence hand values") {
    SUBCASE("uniform T=10 S=3") {
        const auto seq = sample_timesteps(10, 3, TimestepMode::kUniform);
        CHECK(seq.taus == std::vector<int>{1, 4, 7, 10});
        CHECK(seq.mode == TimestepMode::kUniform);
        CHECK(seq.span() == 3);
    }
    SUBCASE("logarithmic T=1000 S=3") {
        const auto seq = sample_timesteps(1000, 3, TimestepMode::kLogarithmic);
        CHECK(seq.taus == std::vector<int>{1, 10, 100, 1000});
    }
    SUBCASE("uniform full sequence T=5 S=5 drops a rounding collision") {
        // Grid points 1, 1.8, 2.6, 3.4, 4.2, 5 round to 1,2,3,3,4,5; the
        // duplicate 3 is dropped.
        const auto seq = sample_timesteps(5, 5, TimestepMode::kUniform);
        CHECK(seq.taus == std::vector<int>{1, 2, 3, 4, 5});
    }
    SUBCASE("uniform S=T-1 yields consecutive integers") {
        const auto seq = sample_timesteps(8, 7, TimestepMode::kUniform);
        CHECK(seq.taus == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
    }
    SUBCASE("logarithmic rounding collisions are dropped") {
        // 10^{i/5} for i=0..5 rounds to 1,2,3,4,6,10: no duplicate here,
        // 4^{i/4} rounds to 1,1,2,3,4: one collision dropped.
        CHECK(sample_timesteps(10, 5, TimestepMode::kLogarithmic).taus ==
              std::vector<int>{1, 2, 3, 4, 6, 10});
        CHECK(sample_timesteps(4, 4, TimestepMode::kLogarithmic).taus ==
              std::vector<int>{1, 2, 3, 4});
    }
}

TEST_CASE("timestep subsequence randomized bounds") {
    dnf::Rng rng(20240817);
    for (int trial = 0; trial < 10000; ++trial) {
        const int T = 1 + static_cast<int>(rng.below(2000));
        const int S = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
        const auto mode = rng.below(2) == 0 ? TimestepMode::kUniform : TimestepMode::kLogarithmic;
        const auto seq = sample_timesteps(T, S, mode);
        REQUIRE(!seq.taus.empty());
        REQUIRE(seq.taus.front() >= 1);
        REQUIRE(seq.taus.back() <= T);
        for (std::size_t i = 1; i < seq.taus.size(); ++i) REQUIRE(seq.taus[i] > seq.taus[i - 1]);
        REQUIRE(seq.taus.size() <= static_cast<std::size_t>(S) + 1);
    }
}

TEST_CASE("timestep parameter errors") {
    CHECK_THROWS_AS(sample_timesteps(10, 0, TimestepMode::kUniform), std::invalid_argument);
    CHECK_THROWS_AS(sample_timesteps(10, 11, TimestepMode::kUniform), std::invalid_argument);
    CHECK_THROWS_AS(sample_timesteps(0, 1, TimestepMode::kUniform), std::invalid_argument);
}

TEST_CASE("timestep mode strings") {
    CHECK(std::string(to_string(TimestepMode::kUniform)) == "uniform");
    CHECK(std::string(to_string(TimestepMode::kLogarithmic)) == "logarithmic");
    CHECK(dnf::timestep_mode_from_string("uniform") == TimestepMode::kUniform);
    CHECK(dnf::timestep_mode_from_string("logarithmic") == TimestepMode::kLogarithmic);
    CHECK_THROWS_AS(dnf::timestep_mode_from_string("exp"), std::invalid_argument);
}
