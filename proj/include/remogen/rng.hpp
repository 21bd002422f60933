#pragma once

#include <cstdint>
#include <string_view>

#include "remogen/tensor.hpp"

namespace remogen {

// Counter-based generator: output k is a SplitMix64 finalizer applied to
// (key + k * golden-gamma). Streams are fully determined by (seed, stream id)
// and never depend on platform libraries for integer/uniform draws.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-ctr/1";

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes two draws.
  double normal();
  std::uint64_t below(std::uint64_t n);

  // Independent substream derived from this generator's seed.
  Rng fork(std::uint64_t stream) const { return Rng(seed_, stream_ * 0x100000001B3ull + stream + 1); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

enum class InitScheme { kUniformFan, kZeros };

// Weight-shaped tensor (fan-in = rows). Uniform-fan draws U(-1/sqrt(rows), 1/sqrt(rows)).
Tensor2 seeded_init(std::size_t rows, std::size_t cols, InitScheme scheme, Rng& rng);

Tensor2 random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);
Tensor2 random_uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi);

}  // namespace remogen
