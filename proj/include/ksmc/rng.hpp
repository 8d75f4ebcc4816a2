#pragma once

#include <cstdint>
#include <random>

namespace ksmc {

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Stream roles used when deriving per-(iteration, particle) substreams so
/// that distinct uses of randomness inside one iteration never collide.
enum class StreamId : std::uint64_t {
  kInit = 1,
  kMove = 2,
  kResample = 3,
  kEmulator = 4,
  kFeatureMap = 5,
  kTargetNoise = 6,
  kReference = 7,
};

/// Deterministically derives an independent generator from (seed, a, b, c).
/// Substreams depend only on their indices, not on draw order, so per-particle
/// work can be farmed out to any number of threads without changing results.
inline Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                     std::uint64_t c = 0) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ (0x517cc1b727220a95ULL + a));
  h = detail::splitmix64(h ^ (0x2545f4914f6cdd1dULL + b));
  h = detail::splitmix64(h ^ (0x9e3779b97f4a7c15ULL + c));
  return Rng(h);
}

inline Rng substream(std::uint64_t seed, std::uint64_t iteration,
                     std::uint64_t particle, StreamId which) {
  return substream(seed, iteration, particle,
                   static_cast<std::uint64_t>(which));
}

inline double draw_uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double draw_normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

}  // namespace ksmc
