#pragma once

#include <cmath>
#include <cstdint>

namespace clnet {

// splitmix64, used both as a stream-derivation mixer and as the seeder for
// the main generator. Bit-reproducible on every platform, unlike the
// standard-library distributions.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed plus up to three tags.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = seed;
    uint64_t h = splitmix64(s);
    s ^= a * 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= b * 0xc2b2ae3d27d4eb4fULL;
    h ^= splitmix64(s);
    s ^= c * 0x165667b19e3779f9ULL;
    h ^= splitmix64(s);
    return h;
}

// xoshiro256** seeded via splitmix64. Deterministic across compilers and
// platforms; the uniform/normal draws below avoid std::*_distribution on
// purpose (their output sequences are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
        cached_normal_valid_ = false;
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

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Integer in [0, n), n > 0.
    uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (cached_normal_valid_) {
            cached_normal_valid_ = false;
            return cached_normal_;
        }
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_normal_ = r * std::sin(a);
        cached_normal_valid_ = true;
        return r * std::cos(a);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool cached_normal_valid_ = false;
};

// Stream tags so unrelated consumers of the same user seed never collide.
namespace rng_stream {
constexpr uint64_t kEncoderInit = 0x01;
constexpr uint64_t kNeuralMapInit = 0x02;
constexpr uint64_t kNecInit = 0x03;
constexpr uint64_t kFreeSatMapInit = 0x04;
constexpr uint64_t kScene = 0x10;
constexpr uint64_t kRenderNoise = 0x11;
constexpr uint64_t kAugment = 0x12;
constexpr uint64_t kShuffle = 0x20;
} // namespace rng_stream

} // namespace clnet
