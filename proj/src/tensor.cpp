#include "remogen/tensor.hpp"

#include <algorithm>

namespace remogen {

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  }
  return m;
}

double frobenius_norm(const Tensor2& t) {
  double s = 0.0;
  for (float x : t.data()) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

namespace {

// Each group of four b rows is applied to every row of a while it is hot in
// cache. Per output element the summation order is fixed, so the AVX2 clone
// and the baseline agree bit for bit (contraction into FMA is disabled).
__attribute__((target_clones("avx2", "default"))) void matmul_kernel(const float* a, const float* b, double* acc,
                                                                     std::size_t n, std::size_t k, std::size_t m) {
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const float* b0 = b + p * m;
    const float* b1 = b0 + m;
    const float* b2 = b1 + m;
    const float* b3 = b2 + m;
    for (std::size_t i = 0; i < n; ++i) {
      const float* arow = a + i * k;
      const double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0) continue;
      double* out = acc + i * m;
      for (std::size_t j = 0; j < m; ++j) out[j] += (a0 * b0[j] + a1 * b1[j]) + (a2 * b2[j] + a3 * b3[j]);
    }
  }
  for (; p < k; ++p) {
    const float* brow = b + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* out = acc + i * m;
      for (std::size_t j = 0; j < m; ++j) out[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  thread_local std::vector<double> acc;
  acc.assign(n * m, 0.0);
  matmul_kernel(a.data().data(), b.data().data(), acc.data(), n, k, m);
  Tensor2 out(n, m);
  for (std::size_t i = 0; i < n * m; ++i) out.data()[i] = static_cast<float>(acc[i]);
  return out;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor2 concat_rows(const Tensor2& top, const Tensor2& bottom) {
  if (top.rows() == 0) return bottom;
  if (bottom.rows() == 0) return top;
  if (top.cols() != bottom.cols()) throw DimensionError("concat_rows: column mismatch");
  std::vector<float> data(top.data().begin(), top.data().end());
  data.insert(data.end(), bottom.data().begin(), bottom.data().end());
  return Tensor2(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

Tensor2 slice_rows(const Tensor2& t, std::size_t begin, std::size_t end) {
  if (begin > end || end > t.rows()) throw DimensionError("slice_rows: range out of bounds");
  std::vector<float> data(t.data().begin() + begin * t.cols(), t.data().begin() + end * t.cols());
  return Tensor2(end - begin, t.cols(), std::move(data));
}

Tensor2 flatten(const Tensor2& t) {
  return Tensor2(1, t.size(), std::vector<float>(t.data().begin(), t.data().end()));
}

void add_inplace(Tensor2& dst, const Tensor2& src) {
  if (!dst.same_shape(src)) throw DimensionError("add: shape mismatch");
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Tensor2 add(const Tensor2& a, const Tensor2& b) {
  Tensor2 out = a;
  add_inplace(out, b);
  return out;
}

Tensor2 sub(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch");
  Tensor2 out = a;
  auto o = out.data();
  auto s = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= s[i];
  return out;
}

Tensor2 scale(const Tensor2& a, double s) {
  Tensor2 out = a;
  for (float& x : out.data()) x = static_cast<float>(x * s);
  return out;
}

float sigmoid(float x) { return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); }

float silu(float x) { return static_cast<float>(x / (1.0 + std::exp(-static_cast<double>(x)))); }

float gelu(float x) {
  const double v = x;
  return static_cast<float>(0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v))));
}

Tensor2 apply_silu(Tensor2 t) {
  for (float& x : t.data()) x = silu(x);
  return t;
}

Tensor2 apply_gelu(Tensor2 t) {
  for (float& x : t.data()) x = gelu(x);
  return t;
}

Tensor2 apply(const Linear& layer, const Tensor2& x) {
  if (x.cols() != layer.in_features()) {
    throw DimensionError("linear: input width " + std::to_string(x.cols()) + " != " +
                         std::to_string(layer.in_features()));
  }
  Tensor2 y = matmul(x, layer.weight);
  if (layer.bias.size() != 0) {
    if (layer.bias.size() != y.cols()) throw DimensionError("linear: bias width mismatch");
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto row = y.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias.data()[c];
    }
  }
  return y;
}

LayerNormParams layer_norm_identity(std::size_t width) {
  return {Tensor2(1, width, 1.0f), Tensor2(1, width, 0.0f)};
}

Tensor2 layer_norm(const Tensor2& x, const LayerNormParams& p) {
  if (p.gain.size() != x.cols() || p.offset.size() != x.cols()) {
    throw DimensionError("layer_norm: parameter width mismatch");
  }
  Tensor2 out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = static_cast<float>((in[c] - mean) * inv * p.gain.data()[c] + p.offset.data()[c]);
    }
  }
  return out;
}

}  // namespace remogen
