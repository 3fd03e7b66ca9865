#pragma once

#include "skewtvb/common.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace skewtvb {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based seed splitting: the child seed is a splitmix64 chain over the
/// root seed followed by each counter in order. Children of distinct counter
/// tuples are statistically independent streams.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> counters) {
  std::uint64_t s = splitmix64(root);
  for (std::uint64_t c : counters) s = splitmix64(s ^ splitmix64(c + 0x632BE59BD9B4E019ULL));
  return s;
}

inline Vector standard_normal_vector(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

/// Gamma(shape, rate) draw.
inline double gamma_draw(double shape, double rate, Rng& rng) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return g(rng);
}

}  // namespace skewtvb
