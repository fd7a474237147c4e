#pragma once

#include <cstdint>

namespace risopt {

// Deterministic 64-bit generator (xoshiro256**) with an explicit stream-split
// rule, so parallel sample generation can use independent, reproducible
// streams. All floating-point draws are derived from the raw bit stream with
// fixed arithmetic; two runs with the same seed produce bit-identical values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller on the raw uniform stream.
  double normal();

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  // Child stream `index` of this generator's seed. Streams are decorrelated
  // by hashing (seed, index) through SplitMix64; the parent state is not
  // advanced.
  Rng split(std::uint64_t index) const;

 private:
  std::uint64_t state_[4];
  std::uint64_t seed_;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace risopt
