#pragma once

#include <cstdint>

namespace augvit {

// splitmix64 finalizer (Steele et al.). Used both as the stream step and
// as the mixing function for substream derivation.
inline uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Derives an independent stream seed from (seed, a, b). Pure function, so
// substreams can be re-created in any order; augmentation of sample k in
// epoch e never depends on what other samples drew.
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ull * (a + 1));
    return mix64(h ^ (b + 0x517cc1b727220a95ull));
}

// Counter-based generator: bitwise identical output on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    // uniform in [0, 1), 53-bit resolution
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi]; degenerate intervals return lo exactly
    double uniform(double lo, double hi) {
        if (lo == hi) return lo;
        return lo + (hi - lo) * next_double();
    }

    // uniform integer in [0, n); rejection sampling, no modulo bias
    uint64_t next_below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    Rng substream(uint64_t a, uint64_t b = 0) const {
        return Rng(derive_seed(state_, a, b));
    }

private:
    uint64_t state_;
};

// Seeded Fisher-Yates shuffle.
template <typename Vec>
void shuffle(Vec& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace augvit
