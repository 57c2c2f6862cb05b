#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace chronoweft {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to fan one seed out into independent streams.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

[[nodiscard]] constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for a named stage and an index below it.  Deterministic, and
/// streams with different labels or indices do not overlap in practice.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                                  std::uint64_t index = 0) noexcept {
  return mix64(mix64(seed ^ fnv1a(label)) + index);
}

[[nodiscard]] inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

[[nodiscard]] inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

[[nodiscard]] inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace chronoweft
