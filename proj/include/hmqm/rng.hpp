#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace hmqm {

/// The one generator type used by every randomized operation. Seeded from a
/// single 64-bit value so runs can be replayed exactly.
using Rng = std::mt19937_64;

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Independent seed for sub-stream `stream` of a run seeded with `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  return mix64(base ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Maps a raw 64-bit draw onto [0, 1) using its top 53 bits.
constexpr double unit_interval(std::uint64_t draw) noexcept {
  return static_cast<double>(draw >> 11) * 0x1.0p-53;
}

inline double uniform01(Rng& rng) { return unit_interval(rng()); }

/// Uniform integer in [0, bound).
inline std::size_t uniform_index(Rng& rng, std::size_t bound) {
  return std::uniform_int_distribution<std::size_t>(0, bound - 1)(rng);
}

}  // namespace hmqm
