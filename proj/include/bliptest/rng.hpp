#ifndef BLIPTEST_RNG_HPP
#define BLIPTEST_RNG_HPP

#include <cmath>
#include <cstdint>
#include <span>

#include "bliptest/errors.hpp"

namespace bliptest {

// SplitMix64 finalizer; a 64-bit bijection with good avalanche.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive an independent stream seed from a master seed and a stream id.
// Streams keyed by (seed, replicate index) make parallel generation
// reproducible regardless of worker count or platform.
inline uint64_t derive_seed(uint64_t master, uint64_t a) {
  return mix64(master ^ mix64(a + 0x6a09e667f3bcc909ull));
}
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b, uint64_t c) {
  return derive_seed(derive_seed(master, a, b), c);
}

// SplitMix64 generator. All samplers below use only portable floating
// arithmetic, so a fixed seed yields bit-identical draws on any platform.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  static Rng stream(uint64_t master, uint64_t stream_id) {
    return Rng(derive_seed(master, stream_id));
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n).
  uint32_t uniform_int(uint32_t n) {
    // Lemire's multiply-shift with rejection.
    uint64_t x = next_u64() >> 32;
    uint64_t m = x * n;
    uint32_t lo = static_cast<uint32_t>(m);
    if (lo < n) {
      uint32_t thresh = (~n + 1u) % n;
      while (lo < thresh) {
        x = next_u64() >> 32;
        m = x * n;
        lo = static_cast<uint32_t>(m);
      }
    }
    return static_cast<uint32_t>(m >> 32);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; consumes two uniforms per draw (no caching, keeps the
  // draw count per call fixed).
  double normal(double mean, double sd) {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(6.283185307179586476925287 * u2);
  }

  // Knuth's product method; adequate for the rates used here (< ~100).
  int poisson(double mean) {
    if (mean <= 0.0) throw Error(ErrorKind::domain, "poisson rate must be positive");
    double limit = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Index into a discrete distribution given as probabilities summing to 1.
  size_t categorical(std::span<const double> probs) {
    double u = uniform();
    double cum = 0.0;
    for (size_t i = 0; i + 1 < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
  }

private:
  uint64_t state_;
};

} // namespace bliptest

#endif
