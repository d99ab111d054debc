#pragma once

#include <cmath>
#include <cstdint>

namespace d3m {

// SplitMix64. All randomness in the pipeline flows through this generator so
// that results are reproducible from stored 64-bit seeds alone, independent
// of the standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; one value per call, cache for the pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stateless mix of a base seed with stream identifiers. Used to derive
// per-class / per-record seeds so each is stored explicitly yet reproducible.
inline uint64_t mix_seed(uint64_t base, uint64_t a, uint64_t b = 0) {
    Rng r(base ^ (a * 0xd1342543de82ef95ULL) ^ (b * 0xaf251af3b0f025b5ULL));
    return r.next_u64();
}

}  // namespace d3m
