#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace scone {

/// Deterministic PRNG (xoshiro256** seeded through splitmix64). Self-contained
/// so that identical seeds give identical streams on every platform, which the
/// reproducibility guarantees of the toolkit depend on.
///
/// Substreams are derived by name: derive("pairs") hashes the stream name into
/// the root seed, so the draw order of one consumer never shifts another's.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {
        uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (pairs are cached).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

    /// Named substream, independent of how much of this stream was consumed.
    Rng derive(std::string_view stream) const {
        uint64_t h = 1469598103934665603ull; // FNV-1a
        for (char c : stream) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        uint64_t x = seed_ ^ h;
        return Rng(splitmix64(x));
    }

    Rng derive(std::string_view stream, uint64_t index) const {
        uint64_t x = derive(stream).seed_ + 0x9e3779b97f4a7c15ull * (index + 1);
        return Rng(splitmix64(x));
    }

    uint64_t seed() const { return seed_; }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t seed_;
    uint64_t state_[4];
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace scone
