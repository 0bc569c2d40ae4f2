// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace layerlens::numerics {

/// Seeded random source. The engine is std::mt19937_64; the distributions are
/// written out here because the standard ones are implementation-defined, and
/// seeded runs must reproduce across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller; consumes two uniforms per call.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Normal(0, sigma) resampled until it falls within two standard deviations.
    double truncated_normal(double sigma) {
        for (;;) {
            const double z = normal();
            if (std::abs(z) <= 2.0) return z * sigma;
        }
    }

    /// Independent child stream derived from this one.
    Rng fork() { return Rng(engine_()); }

private:
    std::mt19937_64 engine_;
};

}  // namespace layerlens::numerics
