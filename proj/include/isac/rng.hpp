#pragma once

#include <cstdint>
#include <cmath>
#include <complex>

namespace isac {

/// Deterministic PRNG (xoshiro256++ seeded via splitmix64).
///
/// The standard library distributions are not bit-reproducible across
/// implementations, so all randomness in the simulator goes through this
/// generator. Substreams are derived by hashing a (seed, tag...) tuple,
/// which keeps per-TTS / per-BS draws independent of evaluation order.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : state_) w = splitmix64(sm);
        have_spare_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (cached spare).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Complex sample with independent N(0, comp_var) real and imaginary parts.
    std::complex<double> cnormal(double comp_var) {
        const double s = std::sqrt(comp_var);
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Derives an independent substream seed from a tuple of tags.
    template <typename... Tags>
    static uint64_t derive(uint64_t seed, Tags... tags) {
        uint64_t h = seed ^ 0xA0761D6478BD642Full;
        ((h = mix(h, static_cast<uint64_t>(tags))), ...);
        return h;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t x = a + 0x9E3779B97F4A7C15ull + (b << 1 | 1);
        return splitmix64(x);
    }

    uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_;
};

} // namespace isac
