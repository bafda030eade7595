#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace dmm {

// Deterministic, platform-independent random source. std::normal_distribution
// and friends are implementation-defined, so all transforms are done by hand;
// two runs with the same seed produce bit-identical streams on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        // SplitMix64 expansion of the seed into the xoshiro256** state.
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            s = z ^ (z >> 31);
        }
        have_spare_ = false;
        spare_ = 0.0;
    }

    // Independent substream; (seed, salt) -> new generator, used to hand one
    // stream per batch chunk / sample path so parallel runs stay reproducible.
    Rng split(std::uint64_t salt) const {
        std::uint64_t z = seed_ ^ (salt * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // Lemire-style rejection-free enough for our n (n << 2^64).
        return next_u64() % n;
    }

    // Standard normal via Marsaglia polar method.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Exp(rate).
    double exponential(double rate) {
        if (rate <= 0.0) throw std::invalid_argument("Rng::exponential: rate must be > 0");
        double u;
        do { u = uniform(); } while (u == 0.0);
        return -std::log(u) / rate;
    }

    // Poisson(mean). Knuth's product method, with the mean halved recursively
    // for large arguments so the product never underflows.
    std::uint64_t poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("Rng::poisson: mean must be >= 0");
        if (mean == 0.0) return 0;
        if (mean > 30.0) return poisson(mean / 2.0) + poisson(mean / 2.0);
        const double limit = std::exp(-mean);
        std::uint64_t k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }

    std::uint64_t seed() const { return seed_; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_;
    std::uint64_t state_[4];
    bool have_spare_;
    double spare_;
};

}  // namespace dmm
