#pragma once

#include <cmath>
#include <cstdint>

namespace abevo {

// Counter-splittable PRNG (splitmix64 core). Streams derived from the same
// seed with distinct stream ids are independent, so record-level generation
// can be parallelized without changing the output.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  static Rng stream(uint64_t seed, uint64_t stream_id) {
    return Rng(mix(seed + 0x9e3779b97f4a7c15ull * (stream_id + 1)));
  }

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n) {
    // multiply-shift with rejection of the biased tail
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next();
      unsigned __int128 m = static_cast<unsigned __int128>(r) * n;
      if (static_cast<uint64_t>(m) >= threshold) return static_cast<uint64_t>(m >> 64);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller without caching so the stream stays position-independent.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  template <typename T>
  void shuffle(T& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

// Stable 64-bit string hash, used to derive per-name parameter init streams.
inline uint64_t fnv1a64(const char* s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (; *s; ++s) {
    h ^= static_cast<unsigned char>(*s);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace abevo
