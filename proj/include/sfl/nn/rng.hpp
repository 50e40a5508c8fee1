#pragma once
// Counter-based splittable PRNG.
//
// A stream is a 64-bit key; draw i of the stream is a bijective mix of
// (key, i). Child streams are keyed by hashing the parent key with a name, so
// every consumer (init, shuffling, augmentation, attacker noise) gets a stream
// that does not depend on how many numbers other consumers have drawn.

#include <cstdint>
#include <numbers>
#include <string_view>
#include <cmath>
#include <utility>

namespace sfl {

class Rng {
 public:
  explicit Rng(std::uint64_t key = 0) : key_(mix(key ^ 0x5851f42d4c957f2dULL)) {}

  Rng child(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
    for (unsigned char ch : name) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return from_key(mix(key_ ^ mix(h)));
  }

  Rng child(std::uint64_t index) const { return from_key(mix(key_ + mix(index + 0x9e3779b97f4a7c15ULL))); }

  std::uint64_t next_u64() { return mix(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool coin() { return (next_u64() >> 63) != 0; }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  std::uint64_t key() const { return key_; }

 private:
  static Rng from_key(std::uint64_t k) {
    Rng r;
    r.key_ = k;
    return r;
  }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sfl
