#pragma once

#include <cmath>
#include <cstdint>

namespace pdvmrnn {

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic generator with fixed output across platforms and standard
// libraries (std::normal_distribution is not portable, so we roll our own
// transforms on top of xoshiro256**).
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        cached_valid_ = false;
    }

    uint64_t next_u64() {
        uint64_t result = rotl(s_[1] * 5, 7) * 9;
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1).
    double uniform() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Integer in [0, n).
    uint64_t below(uint64_t n) {
        return next_u64() % n;
    }

    // Standard normal via Box-Muller; second value cached.
    double normal() {
        if (cached_valid_) {
            cached_valid_ = false;
            return cached_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.28318530717958647692 * u2;
        cached_ = r * std::sin(a);
        cached_valid_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

private:
    static uint64_t rotl(uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    uint64_t s_[4];
    double cached_ = 0.0;
    bool cached_valid_;
};

// Derives a child seed that cannot collide across (base, index) pairs used
// by dataset generation: sequence i uses mix_seed(base, i).
inline uint64_t mix_seed(uint64_t base, uint64_t index) {
    uint64_t st = base;
    uint64_t a = splitmix64(st);
    st = a ^ index;
    return splitmix64(st);
}

} // namespace pdvmrnn
