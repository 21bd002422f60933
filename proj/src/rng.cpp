#include "remogen/rng.hpp"

#include <cmath>
#include <numbers>

namespace remogen {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(splitmix64_mix(seed ^ splitmix64_mix(stream + kGamma))) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return splitmix64_mix(key_ + counter_ * kGamma);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

Tensor2 seeded_init(std::size_t rows, std::size_t cols, InitScheme scheme, Rng& rng) {
  Tensor2 t(rows, cols);
  if (scheme == InitScheme::kZeros) return t;
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows == 0 ? 1 : rows));
  for (float& x : t.data()) x = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

Tensor2 random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
  Tensor2 t(rows, cols);
  for (float& x : t.data()) x = static_cast<float>(stddev * rng.normal());
  return t;
}

Tensor2 random_uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  Tensor2 t(rows, cols);
  for (float& x : t.data()) x = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

}  // namespace remogen
