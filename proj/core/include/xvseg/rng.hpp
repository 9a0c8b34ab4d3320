#pragma once

#include <cstdint>
#include <random>

namespace xvseg {

// Deterministic RNG used everywhere. All randomness in a run flows from one
// root seed; independent streams are derived by hashing (seed, tag) so that
// results never depend on the order in which subsystems draw.
//
// The draw protocol is part of the reproducibility contract and is relied on
// by reference implementations in the tests:
//   uniform()       -> (mt19937_64() >> 11) * 2^-53, in [0,1)
//   uniform_int(n)  -> floor(uniform() * n), clamped to n-1
//   normal()        -> Box-Muller from two uniform() draws
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

  std::uint64_t raw() { return gen_(); }

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }

  // Child stream for (this seed, tag); independent of draws made so far.
  Rng derive(std::uint64_t tag) const { return Rng(mix(seed_, tag)); }
  Rng derive(std::uint64_t tag_a, std::uint64_t tag_b) const {
    return Rng(mix(mix(seed_, tag_a), tag_b));
  }

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag);

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
};

}  // namespace xvseg
