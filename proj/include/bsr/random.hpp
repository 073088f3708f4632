#pragma once

// Portable random primitives. The standard distributions are implementation
// defined, so everything that feeds a reproducible output goes through these.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace bsr {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Uniform on the open interval (0, 1).
inline double uniform01(std::mt19937_64& rng) noexcept {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline std::size_t pick(std::mt19937_64& rng, std::size_t n) noexcept {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) noexcept {
  return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller; one draw per call.
inline double standard_normal(std::mt19937_64& rng) noexcept {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace bsr
