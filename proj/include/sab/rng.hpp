#pragma once

#include <cstdint>
#include <random>

namespace sab {

/// Seedable 64-bit generator with fixed value mappings, so identical seeds
/// reproduce identical streams on any conforming platform.
///
/// Algorithm: std::mt19937_64 seeded directly with the given value.
///   next_u64()            raw engine output
///   next_unit()           (next_u64() >> 11) * 2^-53, uniform in [0,1)
///   next_uniform(lo,hi)   lo + (hi-lo) * next_unit()
///   next_below(n)         next_u64() % n  (exact for n dividing 2^64,
///                         e.g. the 8 task digits; negligible bias otherwise)
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }
    double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    std::mt19937_64 eng_;
};

}  // namespace sab
