#pragma once

#include <cstdint>
#include <random>

namespace pricesim {

/// Every stochastic routine takes one of these explicitly; nothing is global.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based substream seed: (master, stream, index) -> seed. Replication k
/// can be replayed without running replications 0..k-1.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ index);
}

/// Uniform on [0, 1) from the top 53 bits. Unlike std::uniform_real_distribution
/// the mapping is fixed, so sequences match across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

inline bool coin_flip(Rng& rng) { return (rng() >> 63) != 0; }

} // namespace pricesim
