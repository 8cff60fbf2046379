#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "retroq/common.hpp"

namespace retroq {

// All sampling goes through one generator type seeded from a 64-bit value.
// Distributions are built from raw engine words (not std:: distributions) so
// that streams are identical across standard library implementations.
using Rng = std::mt19937_64;

/// Uniform draw in [0, 1) with 53 random bits.
inline Real uniform01(Rng& rng) {
    return static_cast<Real>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal draw (Box-Muller, consumes two engine words).
inline Real normal01(Rng& rng) {
    const Real u1 = 1.0 - uniform01(rng);  // (0, 1], keeps log finite
    const Real u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

/// Independent substream seed for (seed, stream) pairs. splitmix64 mixing.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace retroq
