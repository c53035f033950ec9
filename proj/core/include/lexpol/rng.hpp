#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string_view>

namespace lexpol {

using Rng = std::mt19937_64;

/// FNV-1a 64-bit hash. Stable across platforms; used for RNG stream tags,
/// token hashing and parameter/trajectory fingerprints.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr std::uint64_t fnv1a64_mix(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Independent, named RNG stream. Components draw from their own stream so
/// adding a component to a run never perturbs the draws of the others.
inline Rng make_stream(std::uint64_t seed, std::string_view tag) {
  return Rng(splitmix64(seed ^ fnv1a64(tag)));
}

inline Rng make_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed ^ fnv1a64(tag)) + index));
}

// Hand-rolled draw helpers: std::*_distribution output is implementation
// defined, these are bit-stable for a given engine state.

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Standard normal via Box-Muller. Consumes two engine draws per value so the
/// stream state stays serializable without a cached spare.
inline double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform index in [0, n) without modulo bias.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline void save_rng(std::ostream& os, const Rng& rng) { os << rng << '\n'; }
inline void load_rng(std::istream& is, Rng& rng) { is >> rng; }

}  // namespace lexpol
