#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace rdas {

/// Seedable random source used everywhere randomness is needed.
///
/// Backed by std::mt19937_64, whose output sequence is fixed by the C++
/// standard. All derived draws (reals, bounded integers, shuffles) are
/// computed here rather than through <random> distributions, which are
/// implementation-defined, so a seed reproduces the same run on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent stream derived from this generator's next output and a tag.
  Rng fork(std::uint64_t tag) { return Rng(next() ^ (tag * 0x9E3779B97F4A7C15ULL)); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rdas
