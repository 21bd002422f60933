#pragma once

#include <cmath>
#include <string>

#include "remogen/fwsr.hpp"
#include "remogen/mim.hpp"
#include "remogen/motion.hpp"
#include "remogen/rng.hpp"
#include "remogen/tensor.hpp"

namespace testing_support {

inline remogen::Tensor2 rand_t(std::size_t r, std::size_t c, remogen::Rng& rng, double lo = -1.0, double hi = 1.0) {
  return remogen::random_uniform(r, c, rng, lo, hi);
}

inline remogen::Linear rand_linear(std::size_t in, std::size_t out, remogen::Rng& rng, double scale = 0.5) {
  return {rand_t(in, out, rng, -scale, scale), rand_t(1, out, rng, -scale, scale)};
}

inline remogen::LayerNormParams rand_ln(std::size_t d, remogen::Rng& rng) {
  return {rand_t(1, d, rng, 0.5, 1.5), rand_t(1, d, rng, -0.2, 0.2)};
}

inline remogen::AttentionParams rand_attn(std::size_t width, std::size_t heads, remogen::Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  return {heads, rand_t(width, width, rng, -s, s), rand_t(width, width, rng, -s, s),
          rand_t(width, width, rng, -s, s), rand_t(width, width, rng, -s, s)};
}

}  // namespace testing_support

namespace testing_support {

inline remogen::MimBlockParams rand_mim_block(std::size_t d, std::size_t heads, std::size_t mult, remogen::Rng& rng) {
  remogen::MimBlockParams p;
  p.ln_self = rand_ln(d, rng);
  p.self_attn = rand_attn(d, heads, rng);
  p.ln_cross = rand_ln(d, rng);
  p.cross_attn = rand_attn(d, heads, rng);
  p.rel_bias = {0.25, rand_t(2, heads, rng)};
  p.film = rand_linear(d, 2 * d, rng);
  p.ln_ffn = rand_ln(d, rng);
  p.ffn_in = rand_linear(d, d * mult, rng);
  p.ffn_out = rand_linear(d * mult, d, rng);
  p.gate = rand_linear(d, d, rng);
  return p;
}

inline remogen::FwsrParams rand_fwsr(std::size_t dz, std::size_t feat, std::size_t heads, remogen::Rng& rng) {
  remogen::FwsrParams p;
  p.dyn_proj = rand_linear(feat, dz, rng);
  p.dyn_ln = rand_ln(dz, rng);
  p.dyn_attn = rand_attn(dz, heads, rng);
  p.cross_attn = rand_attn(dz, heads, rng);
  p.rel_bias = {0.25, rand_t(2, heads, rng)};
  p.film = rand_linear(dz, 2 * dz, rng);
  p.beta_sens = rng.uniform(0.0, 2.0);
  return p;
}

inline remogen::Latent rand_latent(std::size_t n, remogen::Rng& rng) {
  return remogen::Latent::from_row(rand_t(1, n, rng));
}

inline remogen::ModulationDelta rand_delta(const std::string& id, std::size_t layers, std::size_t t, std::size_t d,
                                           remogen::Rng& rng) {
  remogen::ModulationDelta m{id, {}};
  const double scale = rng.uniform(0.0, 3.0);
  for (std::size_t l = 0; l < layers; ++l) m.layers[static_cast<int>(l)] = rand_t(t, d, rng, -scale, scale);
  return m;
}

inline double delta_norm(const remogen::ModulationDelta& m) {
  double s = 0.0;
  for (const auto& [l, t] : m.layers)
    for (float v : t.data()) s += double(v) * v;
  return std::sqrt(s);
}

}  // namespace testing_support
