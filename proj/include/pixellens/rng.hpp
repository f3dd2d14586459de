#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "pixellens/bytes.hpp"

// Seedable, portable random numbers. Every stochastic piece of the synthetic
// campaign draws from its own named substream so that re-rendering one epoch
// (or one calibration frame) never shifts the draws of another.

namespace pixellens {

// splitmix64: tiny, fast, fully portable. Good enough statistics for
// synthetic noise; crucially, identical output on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t uniform_index(std::uint64_t n) {
        // Modulo bias is irrelevant at these ranges (n << 2^64).
        return n == 0 ? 0 : next_u64() % n;
    }

    // Box-Muller, cosine branch only. No state carried between calls, so a
    // substream consumed by one purpose never changes parity for another.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

private:
    std::uint64_t state_;
};

// Derives the seed of a named substream from the campaign master seed.
// Purpose tags are short strings ("noise", "cosmics", ...); index
// distinguishes repeats of the same purpose (epoch number, frame number).
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view purpose,
                                    std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(purpose);
    h = fnv1a64(&master, sizeof master, h);
    h = fnv1a64(&index, sizeof index, h);
    // One splitmix step to spread low-entropy inputs.
    return Rng(h).next_u64();
}

inline Rng substream(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0) {
    return Rng(substream_seed(master, purpose, index));
}

}  // namespace pixellens
