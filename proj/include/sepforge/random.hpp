// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SEPFORGE_RANDOM_HPP_
#define SEPFORGE_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <span>

namespace sepforge {

// mt19937_64 with distributions defined here rather than by the standard
// library, whose distribution algorithms are implementation-defined. Seeded
// streams therefore replay identically across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Index drawn with probability proportional to weights[i].
  std::size_t categorical(std::span<const double> weights);
  double normal();

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; derives independent child seeds from a parent seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace sepforge

#endif  // SEPFORGE_RANDOM_HPP_
