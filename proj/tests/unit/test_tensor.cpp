#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "helpers.hpp"
#include "remogen/attention.hpp"

using namespace remogen;
using testing_support::rand_attn;
using testing_support::rand_t;

TEST_SUITE("tensorcore") {
  TEST_CASE("single key attention returns the value row") {
    Rng rng(3);
    AttentionParams p{1, Tensor2(4, 4), Tensor2(4, 4), Tensor2(4, 4), Tensor2(4, 4)};
    for (std::size_t i = 0; i < 4; ++i) p.wq(i, i) = p.wk(i, i) = p.wv(i, i) = p.wo(i, i) = 1.0f;
    const Tensor2 q = rand_t(1, 4, rng), kv = rand_t(1, 4, rng);
    const Tensor2 out = mha_forward(q, kv, p);
    CHECK(max_abs_diff(out, kv) < 1e-6);
  }

  TEST_CASE("large negative bias masks a key") {
    Rng rng(4);
    AttentionParams p = rand_attn(4, 1, rng);
    for (auto* w : {&p.wv, &p.wo}) {
      *w = Tensor2(4, 4);
      for (std::size_t i = 0; i < 4; ++i) (*w)(i, i) = 1.0f;
    }
    const Tensor2 q = rand_t(1, 4, rng), kv = rand_t(2, 4, rng);
    Tensor2 bias = Tensor2::from_rows({{0.0f, -1e9f}});
    const Tensor2 out = mha_forward(q, kv, p, std::span<const Tensor2>(&bias, 1));
    CHECK(max_abs_diff(out, slice_rows(kv, 0, 1)) < 1e-6);
  }

  TEST_CASE("attention matches the dot-product oracle") {
    Rng rng(7);
    const AttentionParams p = rand_attn(8, 2, rng);
    const Tensor2 q = rand_t(4, 8, rng), kv = rand_t(4, 8, rng);
    RelBiasParams rb{0.25, rand_t(2, 2, rng)};
    const auto bias = relative_bias(4, 4, rb);
    const auto expect = oracle::attention(oracle::from(q), oracle::from(kv), p,
                                          oracle::rel_bias(oracle::index_positions(4), oracle::index_positions(4), rb));
    CHECK(oracle::max_diff(expect, mha_forward(q, kv, p, bias)) < 1e-6);
    CHECK(oracle::max_diff(oracle::attention(oracle::from(q), oracle::from(kv), p), mha_forward(q, kv, p)) < 1e-6);
  }

  TEST_CASE("attention oracle sweep over small shapes") {
    Rng rng(11);
    double worst = 0.0;
    for (int it = 0; it < 200; ++it) {
      const std::size_t heads = 1 + rng.below(2), width = heads * (2 + 2 * rng.below(4));
      const std::size_t tq = 1 + rng.below(8), tk = 1 + rng.below(8);
      const AttentionParams p = rand_attn(width, heads, rng);
      const Tensor2 q = rand_t(tq, width, rng), kv = rand_t(tk, width, rng);
      worst = std::max(worst, oracle::max_diff(oracle::attention(oracle::from(q), oracle::from(kv), p),
                                               mha_forward(q, kv, p)));
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("constant bias shift leaves attention unchanged") {
    Rng rng(5);
    const AttentionParams p = rand_attn(8, 2, rng);
    const Tensor2 q = rand_t(3, 8, rng), kv = rand_t(5, 8, rng);
    std::vector<Tensor2> b0{rand_t(3, 5, rng), rand_t(3, 5, rng)};
    std::vector<Tensor2> b1 = b0;
    for (auto& b : b1)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) b(i, j) += static_cast<float>(i + 1);
    CHECK(max_abs_diff(mha_forward(q, kv, p, b0), mha_forward(q, kv, p, b1)) < 1e-6);
  }

  TEST_CASE("attention rejects shape mismatch and non-finite input") {
    Rng rng(6);
    const AttentionParams p = rand_attn(8, 2, rng);
    CHECK_THROWS_AS(mha_forward(rand_t(2, 6, rng), rand_t(2, 8, rng), p), DimensionError);
    Tensor2 bad_bias(3, 3);
    CHECK_THROWS_AS(mha_forward(rand_t(2, 8, rng), rand_t(2, 8, rng), p, std::span<const Tensor2>(&bad_bias, 1)),
                    DimensionError);
    Tensor2 q = rand_t(2, 8, rng);
    q(0, 0) = std::nanf("");
    CHECK_THROWS_AS(mha_forward(q, rand_t(2, 8, rng), p), NumericError);
    AttentionParams odd = rand_attn(6, 4, rng);
    CHECK_THROWS(mha_forward(rand_t(2, 6, rng), rand_t(2, 6, rng), odd));
  }

  TEST_CASE("relative bias at zero offset and scalar evaluation") {
    RelBiasParams p{0.25, Tensor2::from_rows({{1.0f, 0.0f}, {0.0f, 1.0f}})};
    const auto b = relative_bias(5, 5, p);
    REQUIRE(b.size() == 2);
    CHECK(b[0](2, 2) == doctest::Approx(0.0));
    CHECK(b[1](2, 2) == doctest::Approx(1.0));
    CHECK(b[0](2, 0) == doctest::Approx(0.4794).epsilon(1e-4));
    CHECK(b[1](2, 0) == doctest::Approx(0.8776).epsilon(1e-4));
  }

  TEST_CASE("relative bias depends only on i - j") {
    Rng rng(8);
    RelBiasParams p{0.25, rand_t(2, 3, rng)};
    for (std::size_t t = 1; t <= 16; ++t) {
      const auto b = relative_bias(t, t, p);
      for (const auto& m : b)
        for (std::size_t i = 0; i + 1 < t; ++i)
          for (std::size_t j = 0; j + 1 < t; ++j) REQUIRE(m(i + 1, j + 1) == m(i, j));
    }
  }

  TEST_CASE("finite difference jacobian") {
    Rng rng(9);
    const Tensor2 a = rand_t(3, 4, rng);
    VectorFn lin = [&](std::span<const double> x) {
      std::vector<double> y(3, 0.0);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) y[i] += static_cast<double>(a(i, j)) * x[j] + 0.5;
      return y;
    };
    const std::vector<double> x0{0.3, -1.0, 2.0, 0.1};
    for (double h : {1e-5, 1e-3, 1e-2}) {
      const Tensor2d j = finite_diff_jacobian(lin, x0, h);
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(j(r, c) - a(r, c)) < 1e-8);
    }
    VectorFn sq = [](std::span<const double> x) { return std::vector<double>{x[0] * x[0]}; };
    CHECK(std::abs(finite_diff_jacobian(sq, std::vector<double>{3.0}, 1e-3)(0, 0) - 6.0) < 1e-5);
    VectorFn cst = [](std::span<const double>) { return std::vector<double>{1.0, 2.0}; };
    const Tensor2d z = finite_diff_jacobian(cst, std::vector<double>{1.0, 1.0});
    for (double v : z.data()) CHECK(v == 0.0);
    VectorFn nan = [](std::span<const double>) { return std::vector<double>{std::nan("")}; };
    CHECK_THROWS_AS(finite_diff_jacobian(nan, std::vector<double>{1.0}), NumericError);
  }

  TEST_CASE("seeded init") {
    Rng r0(1);
    const Tensor2 z = seeded_init(3, 5, InitScheme::kZeros, r0);
    for (float v : z.data()) CHECK(v == 0.0f);
    Rng a(1), b(1), c(2);
    const Tensor2 ta = seeded_init(4, 4, InitScheme::kUniformFan, a);
    CHECK(bit_equal(ta, seeded_init(4, 4, InitScheme::kUniformFan, b)));
    CHECK_FALSE(bit_equal(ta, seeded_init(4, 4, InitScheme::kUniformFan, c)));
    for (float v : ta.data()) CHECK(std::abs(v) <= 0.5f);
  }

  TEST_CASE("rng streams are reproducible") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    CHECK(Rng(42).fork(1).next_u64() != Rng(42).fork(2).next_u64());
    CHECK(Rng(42).fork(1).next_u64() == Rng(42).fork(1).next_u64());
    Rng u(5);
    for (int i = 0; i < 1000; ++i) {
      const double x = u.uniform();
      REQUIRE(x >= 0.0);
      REQUIRE(x < 1.0);
    }
  }

  TEST_CASE("matmul and layer norm against oracles") {
    Rng rng(12);
    const Tensor2 a = rand_t(5, 7, rng), b = rand_t(7, 3, rng);
    CHECK(oracle::max_diff(oracle::mul(oracle::from(a), oracle::from(b)), matmul(a, b)) < 1e-6);
    const auto ln = testing_support::rand_ln(7, rng);
    CHECK(oracle::max_diff(oracle::layer_norm(oracle::from(a), ln), layer_norm(a, ln)) < 1e-5);
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
    CHECK(gelu(0.0f) == 0.0f);
    CHECK(std::abs(gelu(1.0f) - oracle::gelu(1.0)) < 1e-6);
  }
}
