#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tsb {

// Distribution helpers with a fixed bit-level recipe, so designs are identical
// across standard library implementations.
using Rng = std::mt19937_64;

/// Independent stream for (seed, tag, index), e.g. one per seed path.
inline Rng derive_rng(std::uint64_t seed, std::uint32_t tag, std::uint32_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag, index};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

/// Box-Muller standard normal.
double standard_normal(Rng& rng);

/// Uniformly random permutation of 0..n-1 (Fisher-Yates).
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

}  // namespace tsb
