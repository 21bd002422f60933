#pragma once

#include <functional>
#include <span>
#include <vector>

#include "remogen/rng.hpp"
#include "remogen/tensor.hpp"

namespace remogen {

// Multi-head attention projections, all width×width in x·W convention.
struct AttentionParams {
  std::size_t heads = 1;
  Tensor2 wq, wk, wv, wo;

  std::size_t width() const { return wq.rows(); }
  std::size_t head_dim() const { return width() / heads; }
  void validate() const;
};

AttentionParams init_attention(std::size_t width, std::size_t heads, Rng& rng);

// Sinusoidal relative-offset bias b_ij = [sin(w*dt), cos(w*dt)] · W_b, dt = i - j.
struct RelBiasParams {
  double omega = 0.25;
  Tensor2 wb;  // 2×heads

  std::size_t heads() const { return wb.cols(); }
};

RelBiasParams init_rel_bias(std::size_t heads, Rng& rng);

// One T_q×T_kv bias matrix per head.
std::vector<Tensor2> relative_bias(std::size_t tq, std::size_t tkv, const RelBiasParams& p);
// Same with explicit positions: dt = q_pos[i] - k_pos[j].
std::vector<Tensor2> relative_bias(std::span<const double> q_pos, std::span<const double> k_pos,
                                   const RelBiasParams& p);

// softmax((Q Kᵀ + B) / sqrt(d_head)) V, followed by the output projection.
// `bias` holds either one matrix per head or a single matrix shared by all heads.
Tensor2 mha_forward(const Tensor2& q_in, const Tensor2& kv_in, const AttentionParams& p,
                    std::span<const Tensor2> bias = {});

// Projected keys and values, reusable while the key/value sequence is fixed.
struct KeyValue {
  Tensor2 k, v;
  std::size_t length() const { return k.rows(); }
};
KeyValue project_kv(const Tensor2& kv_in, const AttentionParams& p);
Tensor2 mha_forward(const Tensor2& q_in, const KeyValue& kv, const AttentionParams& p,
                    std::span<const Tensor2> bias = {});

// Central-difference Jacobian J[i,j] = (f(x + h e_j) - f(x - h e_j))_i / 2h.
using VectorFn = std::function<std::vector<double>(std::span<const double>)>;
inline constexpr double kDefaultFdStep = 1e-3;
Tensor2d finite_diff_jacobian(const VectorFn& f, std::span<const double> x, double h = kDefaultFdStep);

}  // namespace remogen
