#pragma once

// Seeded randomness shared by the clustering, sampling and experiment code.
// Everything here is bit-reproducible across platforms: we never route
// through the implementation-defined std:: distributions.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace divergauge {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// Per-sample stream seed from (global seed, prompt id, sample index).
// Each key is folded in independently, so adding prompts or samples never
// shifts the streams of existing ones.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view prompt_id,
                                 std::uint64_t sample_index) {
  std::uint64_t h = splitmix64(global_seed);
  h = splitmix64(h ^ fnv1a64(prompt_id));
  h = splitmix64(h ^ splitmix64(sample_index));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  // Standard normal via Box-Muller; used by the projection embedder and tests.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace divergauge
