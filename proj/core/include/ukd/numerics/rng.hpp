#pragma once

#include <cstdint>

namespace ukd::num {

/// Counter-based generator: the i-th draw is a pure function of (seed, i), so
/// the stream is identical on every platform and substreams can be derived
/// without touching the parent's position.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent stream keyed by `key`. Does not advance this generator.
  Rng substream(std::uint64_t key) const;
  Rng substream(std::uint64_t key_a, std::uint64_t key_b) const {
    return substream(key_a).substream(key_b);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace ukd::num
