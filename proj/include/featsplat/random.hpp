// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace featsplat {

/// Seeded generator with distribution code of our own, so sequences are identical
/// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : mEngine(seed) {}

    std::uint64_t next() { return mEngine(); }
    /// Uniform in [0, 1).
    double uniform() { return double(mEngine() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) { return n == 0 ? 0 : mEngine() % n; }
    double normal() {
        // Box-Muller; the cached second value is dropped to keep state simple.
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::mt19937_64 mEngine;
};

} // namespace featsplat
