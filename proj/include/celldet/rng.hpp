#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace celldet {

// Deterministic draw helpers on top of std::mt19937_64. The engine sequence
// is fixed by the standard; std::uniform_*_distribution is not, so the
// mappings below are hand-rolled to keep runs reproducible across toolchains.
using Rng = std::mt19937_64;

// Uniform double in [0, 1).
inline double uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform(rng);
}

// Uniform integer in [lo, hi], unbiased via rejection.
inline int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(rng());  // full 64-bit range
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return lo + static_cast<int64_t>(v % span);
}

inline bool bernoulli(Rng& rng, double p) { return uniform(rng) < p; }

// Standard normal via Box-Muller (one value per call; deterministic).
inline double normal(Rng& rng) {
  double u1 = uniform(rng);
  double u2 = uniform(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline double normal(Rng& rng, double mean, double sd) {
  return mean + sd * normal(rng);
}

// Fisher-Yates shuffle with the portable integer draw.
template <class T>
inline void shuffle(Rng& rng, std::vector<T>& v) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace celldet
