#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace sgw {

// 64-bit FNV-1a. Used to derive independent seed streams from string labels
// so that every stochastic component owns a named, reproducible stream.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t seed_stream(uint64_t seed, std::string_view label, uint64_t a = 0,
                            uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = fnv1a(label);
  h = mix64(h ^ seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

// splitmix64 generator. Deliberately not std::mt19937 + std distributions:
// those are implementation-defined, and reproducibility across toolchains is
// part of the determinism contract.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0,n)
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }

  // Index drawn from an (unnormalized is fine) nonnegative weight vector.
  // Never returns a zero-weight index.
  int sample(const std::vector<double>& weights) {
    double total = 0.0;
    int last_positive = -1;
    for (size_t i = 0; i < weights.size(); ++i) {
      total += weights[i];
      if (weights[i] > 0.0) last_positive = static_cast<int>(i);
    }
    double u = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc && weights[i] > 0.0) return static_cast<int>(i);
    }
    return last_positive;
  }

  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace sgw
