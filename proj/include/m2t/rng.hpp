#pragma once

#include "m2t/common.hpp"

#include <cstdint>
#include <random>

namespace m2t {

/// SplitMix64 finalizer. Derives independent stream seeds from a base seed
/// and stream coordinates (epoch, step, ...), so no RNG state needs saving.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept
{
    return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    /// Uniform integer in [lo, hi].
    Index uniform_int(Index lo, Index hi)
    {
        return std::uniform_int_distribution<Index>(lo, hi)(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0)
    {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    /// Normal(0, sigma) resampled until |x| <= bound * sigma.
    double truncated_normal(double sigma, double bound = 2.0)
    {
        for (;;) {
            const double z = normal();
            if (z >= -bound && z <= bound)
                return z * sigma;
        }
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace m2t
