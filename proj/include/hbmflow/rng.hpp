#ifndef HBMFLOW_RNG_HPP
#define HBMFLOW_RNG_HPP

#include <cstdint>
#include <cmath>

namespace hbmflow {

// Counter-based splitmix64.  Every consumer derives its draws from
// (seed, stream, counter), so simulations are reproducible regardless of
// the order in which components ask for numbers.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// Uniform double in [0, 1).
inline double unit_double(uint64_t bits) {
    return (bits >> 11) * 0x1.0p-53;
}

// Small stateful generator.  Components that draw concurrently derive
// disjoint streams from the same seed via the (seed, stream) form.
struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(splitmix64(seed)) {}
    Rng(uint64_t seed, uint64_t stream) : state(splitmix64(hash_combine(seed, stream))) {}
    uint64_t next_u64() { state = splitmix64(state); return state; }
    double next_unit() { return unit_double(next_u64()); }
    // Uniform integer in [lo, hi] inclusive.
    int64_t next_in(int64_t lo, int64_t hi) {
        return lo + (int64_t)(next_u64() % (uint64_t)(hi - lo + 1));
    }
};

// Triangular distribution via inverse CDF.  mode must lie in [lo, hi];
// the mean is (lo + mode + hi) / 3.
inline double triangular(double lo, double mode, double hi, double u) {
    if (hi <= lo) return lo;
    double fc = (mode - lo) / (hi - lo);
    if (u < fc)
        return lo + std::sqrt(u * (hi - lo) * (mode - lo));
    return hi - std::sqrt((1.0 - u) * (hi - lo) * (hi - mode));
}

} // namespace hbmflow

#endif
