#pragma once

#include <cmath>
#include <cstdint>

namespace combdiff {

// SplitMix64, used only to expand seeds into engine state.
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

// xoshiro256++ with explicit (seed, stream) construction. Streams are
// decorrelated by folding the stream index into the SplitMix64 seed, so a
// path's draws depend only on (master seed, stream index), never on thread
// scheduling. Distribution samplers are spelled out here rather than taken
// from <random> so that sequences are identical across standard libraries.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        SplitMix64 sm(seed + stream * 0x9E3779B97F4A7C15ULL);
        for (auto& w : s_) w = sm.next();
        have_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on [a, b).
    double uniform(double a, double b) {
        return a + (b - a) * uniform();
    }

    // Standard normal via Box-Muller; the second deviate is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phase = 6.283185307179586476925287 * u2;
        spare_ = r * std::sin(phase);
        have_spare_ = true;
        return r * std::cos(phase);
    }

    // Exponential with the given rate (mean 1/rate).
    double exponential(double rate) {
        return -std::log(1.0 - uniform()) / rate;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
    bool have_spare_;
    double spare_;
};

} // namespace combdiff
