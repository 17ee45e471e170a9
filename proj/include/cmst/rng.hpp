#pragma once

#include <cstdint>

namespace cmst {

// Splittable deterministic generator. Every consumer derives its own stream
// from (seed, salt...) so runs are reproducible regardless of call order.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t s = 0) : state(s) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Unbiased enough for simulation purposes at the scales we run.
  std::uint64_t below(std::uint64_t bound) { return bound ? next() % bound : 0; }

  // In [lo, hi] inclusive.
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {
    return lo + below(hi - lo + 1);
  }

  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  SplitMix64 g(a ^ (b + 0x517cc1b727220a95ull + (a << 6) + (a >> 2)));
  return g.next();
}

// Stream for one logical actor (e.g. a node) under a global seed.
inline SplitMix64 derive_stream(std::uint64_t seed, std::uint64_t salt) {
  return SplitMix64(hash_combine(seed, salt));
}

}  // namespace cmst
