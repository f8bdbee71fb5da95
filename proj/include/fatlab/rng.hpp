#pragma once

#include <cmath>
#include <cstdint>

namespace fatlab {

// Counter-based RNG: every draw is a pure function of (seed, stream key,
// counter), so any part of a run can be replayed without replaying the rest,
// and results do not depend on evaluation order or thread count. The mixer is
// SplitMix64's finalizer applied to a keyed accumulator. std:: distributions
// are deliberately avoided: their output is not pinned across library
// implementations.
namespace rng {

enum class Stream : uint64_t {
    weight_init = 1,
    attack_init = 2,
    shuffle = 3,
    augment = 4,
    data_gen = 5,
    landscape = 6,
    misc = 7,
};

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct Key {
    uint64_t seed;
    Stream stream;
    uint64_t a = 0;  // epoch, layer index, ...
    uint64_t b = 0;  // batch index, sample index, ...
};

inline uint64_t bits(const Key& k, uint64_t counter) {
    uint64_t h = mix64(k.seed);
    h = mix64(h ^ (uint64_t)k.stream);
    h = mix64(h ^ k.a);
    h = mix64(h ^ k.b);
    return mix64(h ^ counter);
}

// uniform in [0,1)
inline double uniform01(const Key& k, uint64_t counter) {
    return (double)(bits(k, counter) >> 11) * 0x1.0p-53;
}

// uniform in [lo,hi)
inline double uniform(const Key& k, uint64_t counter, double lo, double hi) {
    return lo + (hi - lo) * uniform01(k, counter);
}

// standard normal via Box-Muller; one draw consumes counters 2i and 2i+1
inline double normal(const Key& k, uint64_t i) {
    double u1 = uniform01(k, 2 * i);
    double u2 = uniform01(k, 2 * i + 1);
    if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// +1 or -1 with equal probability
inline double sign_draw(const Key& k, uint64_t counter) {
    return (bits(k, counter) & 1) ? 1.0 : -1.0;
}

// integer in [0, n)
inline uint64_t below(const Key& k, uint64_t counter, uint64_t n) {
    return bits(k, counter) % n;
}

}  // namespace rng
}  // namespace fatlab
