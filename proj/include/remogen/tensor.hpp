#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "remogen/error.hpp"

namespace remogen {

// Dense row-major matrix. Activations and weights use the float instantiation;
// reductions accumulate in double.
template <class T>
class BasicTensor2 {
 public:
  using value_type = T;

  BasicTensor2() = default;
  BasicTensor2(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicTensor2(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("tensor data length does not match rows*cols");
    }
  }

  static BasicTensor2 from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    BasicTensor2 t;
    t.rows_ = rows.size();
    t.cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
    for (const auto& r : rows) {
      if (r.size() != t.cols_) throw DimensionError("ragged row list");
      t.data_.insert(t.data_.end(), r.begin(), r.end());
    }
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const BasicTensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Tensor2 = BasicTensor2<float>;
using Tensor2d = BasicTensor2<double>;

// Bitwise equality (distinguishes -0 from +0 and compares NaN payloads).
template <class T>
bool bit_equal(const BasicTensor2<T>& a, const BasicTensor2<T>& b) {
  return a.same_shape(b) &&
         (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0);
}

inline bool all_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void require_finite(const Tensor2& t, std::string_view what) {
  if (!all_finite(t.data())) throw NumericError(std::string(what) + ": non-finite value");
}

double max_abs_diff(const Tensor2& a, const Tensor2& b);
double frobenius_norm(const Tensor2& t);

// a[r×k] · b[k×c].
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);
Tensor2 concat_rows(const Tensor2& top, const Tensor2& bottom);
Tensor2 slice_rows(const Tensor2& t, std::size_t begin, std::size_t end);
// Row-major flatten into a single row.
Tensor2 flatten(const Tensor2& t);

void add_inplace(Tensor2& dst, const Tensor2& src);
Tensor2 add(const Tensor2& a, const Tensor2& b);
Tensor2 sub(const Tensor2& a, const Tensor2& b);
Tensor2 scale(const Tensor2& a, double s);

float silu(float x);
float sigmoid(float x);
float gelu(float x);
Tensor2 apply_silu(Tensor2 t);
Tensor2 apply_gelu(Tensor2 t);

// y = x·W + b with W stored in×out and b as 1×out.
struct Linear {
  Tensor2 weight;
  Tensor2 bias;

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
};

Tensor2 apply(const Linear& layer, const Tensor2& x);

struct LayerNormParams {
  Tensor2 gain;    // 1×d
  Tensor2 offset;  // 1×d
};

inline constexpr double kLayerNormEps = 1e-5;

LayerNormParams layer_norm_identity(std::size_t width);
Tensor2 layer_norm(const Tensor2& x, const LayerNormParams& p);

}  // namespace remogen
