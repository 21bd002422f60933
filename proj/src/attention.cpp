#include "remogen/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace remogen {

void AttentionParams::validate() const {
  const std::size_t w = wq.rows();
  if (heads == 0 || w == 0 || w % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(w) + " not divisible by heads " +
                         std::to_string(heads));
  }
  for (const Tensor2* m : {&wq, &wk, &wv, &wo}) {
    if (m->rows() != w || m->cols() != w) throw DimensionError("attention: projection shape mismatch");
  }
}

AttentionParams init_attention(std::size_t width, std::size_t heads, Rng& rng) {
  AttentionParams p;
  p.heads = heads;
  p.wq = seeded_init(width, width, InitScheme::kUniformFan, rng);
  p.wk = seeded_init(width, width, InitScheme::kUniformFan, rng);
  p.wv = seeded_init(width, width, InitScheme::kUniformFan, rng);
  p.wo = seeded_init(width, width, InitScheme::kUniformFan, rng);
  p.validate();
  return p;
}

RelBiasParams init_rel_bias(std::size_t heads, Rng& rng) {
  RelBiasParams p;
  p.wb = seeded_init(2, heads, InitScheme::kUniformFan, rng);
  return p;
}

std::vector<Tensor2> relative_bias(std::span<const double> q_pos, std::span<const double> k_pos,
                                   const RelBiasParams& p) {
  if (!(p.omega > 0.0)) throw ConfigError("relative_bias: omega must be positive");
  if (p.wb.rows() != 2) throw DimensionError("relative_bias: W_b must have 2 rows");
  const std::size_t heads = p.heads();
  std::vector<Tensor2> out(heads, Tensor2(q_pos.size(), k_pos.size()));
  for (std::size_t i = 0; i < q_pos.size(); ++i) {
    for (std::size_t j = 0; j < k_pos.size(); ++j) {
      const double dt = q_pos[i] - k_pos[j];
      const double s = std::sin(p.omega * dt), c = std::cos(p.omega * dt);
      for (std::size_t h = 0; h < heads; ++h) {
        out[h](i, j) = static_cast<float>(s * p.wb(0, h) + c * p.wb(1, h));
      }
    }
  }
  return out;
}

std::vector<Tensor2> relative_bias(std::size_t tq, std::size_t tkv, const RelBiasParams& p) {
  std::vector<double> q(tq), k(tkv);
  for (std::size_t i = 0; i < tq; ++i) q[i] = static_cast<double>(i);
  for (std::size_t j = 0; j < tkv; ++j) k[j] = static_cast<double>(j);
  return relative_bias(q, k, p);
}

KeyValue project_kv(const Tensor2& kv_in, const AttentionParams& p) {
  p.validate();
  if (kv_in.cols() != p.width()) {
    throw DimensionError("mha_forward: input width must equal attention width " + std::to_string(p.width()));
  }
  if (kv_in.rows() == 0) throw DimensionError("mha_forward: empty key/value sequence");
  require_finite(kv_in, "mha_forward key/value");
  return {matmul(kv_in, p.wk), matmul(kv_in, p.wv)};
}

Tensor2 mha_forward(const Tensor2& q_in, const Tensor2& kv_in, const AttentionParams& p,
                    std::span<const Tensor2> bias) {
  if (q_in.cols() != p.width()) {
    throw DimensionError("mha_forward: input width must equal attention width " + std::to_string(p.width()));
  }
  return mha_forward(q_in, project_kv(kv_in, p), p, bias);
}

Tensor2 mha_forward(const Tensor2& q_in, const KeyValue& kv, const AttentionParams& p,
                    std::span<const Tensor2> bias) {
  p.validate();
  const std::size_t w = p.width();
  if (q_in.cols() != w) {
    throw DimensionError("mha_forward: input width must equal attention width " + std::to_string(w));
  }
  if (kv.length() == 0 || kv.k.cols() != w || !kv.v.same_shape(kv.k)) {
    throw DimensionError("mha_forward: malformed key/value projection");
  }
  require_finite(q_in, "mha_forward query");
  if (!bias.empty() && bias.size() != 1 && bias.size() != p.heads) {
    throw DimensionError("mha_forward: bias must be per head or shared");
  }
  for (const Tensor2& b : bias) {
    if (b.rows() != q_in.rows() || b.cols() != kv.length()) {
      throw DimensionError("mha_forward: bias shape must be T_q×T_kv");
    }
  }

  const Tensor2 q = matmul(q_in, p.wq);
  const Tensor2& k = kv.k;
  const Tensor2& v = kv.v;
  const std::size_t dh = p.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t tq = q_in.rows(), tk = kv.length();

  Tensor2 mixed(tq, w);
  std::vector<double> scores(tk);
  std::vector<double> acc(dh);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Tensor2* b = bias.empty() ? nullptr : &bias[bias.size() == 1 ? 0 : h];
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < tq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < tk; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += static_cast<double>(q(i, off + c)) * k(j, off + c);
        if (b) dot += (*b)(i, j);
        scores[j] = dot * inv_sqrt;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t j = 0; j < tk; ++j) {
        const double a = scores[j] / z;
        for (std::size_t c = 0; c < dh; ++c) acc[c] += a * v(j, off + c);
      }
      for (std::size_t c = 0; c < dh; ++c) mixed(i, off + c) = static_cast<float>(acc[c]);
    }
  }
  return matmul(mixed, p.wo);
}

Tensor2d finite_diff_jacobian(const VectorFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_jacobian: step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  Tensor2d jac;
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const std::vector<double> plus = f(probe);
    probe[j] = x[j] - h;
    const std::vector<double> minus = f(probe);
    probe[j] = x[j];
    if (plus.size() != minus.size()) throw DimensionError("finite_diff_jacobian: output size changed");
    if (j == 0) jac = Tensor2d(plus.size(), x.size());
    if (plus.size() != jac.rows()) throw DimensionError("finite_diff_jacobian: output size changed");
    for (std::size_t i = 0; i < plus.size(); ++i) {
      if (!std::isfinite(plus[i]) || !std::isfinite(minus[i])) {
        throw NumericError("finite_diff_jacobian: non-finite function value");
      }
      jac(i, j) = (plus[i] - minus[i]) / (2.0 * h);
    }
  }
  return jac;
}

}  // namespace remogen
