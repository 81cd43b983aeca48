#pragma once

#include <cstdint>
#include <random>

namespace qlink {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream keyed by (master seed, a, b). Used per grid point and
// per cycle so results never depend on which worker ran which cycle.
inline Rng make_stream(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t k = splitmix64(master);
  k = splitmix64(k ^ splitmix64(a + 0x632be59bd9b4e019ULL));
  k = splitmix64(k ^ splitmix64(b + 0x85157af5ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) {
    return false;
  }
  if (p >= 1.0) {
    return true;
  }
  return uniform01(rng) < p;
}

inline double gaussian(Rng& rng, double sigma) {
  if (sigma <= 0.0) {
    return 0.0;
  }
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

}  // namespace qlink
