#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "remogen/prior.hpp"

using namespace remogen;
using testing_support::rand_latent;

namespace {

PriorDims small_dims(std::size_t h = 2, std::size_t f = 8) {
  PriorDims d;
  d.history = h;
  d.future = f;
  d.feature_dim = 12;
  d.latent_dim = 8;
  d.width = 16;
  d.heads = 2;
  d.layers = 2;
  d.text_dim = 8;
  d.text_buckets = 64;
  d.decoder_hidden = 16;
  return d;
}

Prior small_prior(std::uint64_t seed = 1, std::size_t h = 2, std::size_t f = 8) {
  Rng rng(seed);
  return Prior(std::make_shared<PriorParams>(init_prior_params(small_dims(h, f), rng)));
}

HistoryWindow rand_history(const PriorDims& d, Rng& rng) {
  return HistoryWindow(testing_support::rand_t(d.history, d.feature_dim, rng));
}

struct StubDenoiser final : LatentDenoiser {
  Latent fixed;
  Latent garbage;
  mutable int cond_calls = 0, uncond_calls = 0;
  std::size_t latent_dim() const override { return fixed.dim(); }
  Latent predict(const Latent&, std::size_t, const HistoryWindow&, const TextEmbedding& text,
                 const DeltaSource*) const override {
    if (text.null_flag) {
      ++uncond_calls;
      return garbage.dim() ? garbage : fixed;
    }
    ++cond_calls;
    return fixed;
  }
};

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_SUITE("prior") {
  TEST_CASE("text embedding") {
    const Prior p = small_prior();
    const TextEmbedding e = p.embed_text("");
    CHECK(e.null_flag);
    for (float v : e.values) CHECK(v == 0.0f);
    CHECK(p.embed_text("Walk  forward").values == p.embed_text("walk forward").values);
    CHECK_FALSE(p.embed_text("walk").null_flag);
    CHECK(cosine(p.embed_text("walk forward").values, p.embed_text("sit down").values) < 1.0);
    CHECK(text_tokens("Sit, DOWN!") == std::vector<std::string>{"sit", "down"});
  }

  TEST_CASE("schedule is monotone") {
    const DiffusionSchedule s = DiffusionSchedule::linear(10);
    CHECK(s.betas.front() == doctest::Approx(1e-4));
    CHECK(s.betas.back() == doctest::Approx(0.2));
    for (std::size_t t = 1; t < 10; ++t) {
      CHECK(s.betas[t] > s.betas[t - 1]);
      CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
    }
    CHECK(s.coef_x0(0) == doctest::Approx(1.0));
    CHECK(s.coef_xt(0) == doctest::Approx(0.0));
  }

  TEST_CASE("decode segment shape determinism and smoothness") {
    const Prior p = small_prior();
    Rng rng(2);
    const HistoryWindow h = rand_history(p.dims(), rng);
    const Latent z = rand_latent(8, rng);
    const MotionSegment a = p.decode_segment(h, z), b = p.decode_segment(h, z);
    CHECK(a.length() == 8);
    CHECK(a.frames.cols() == 12);
    CHECK(bit_equal(a.frames, b.frames));
    Latent z2 = z;
    z2.values[0] += 1e-6f;
    CHECK(max_abs_diff(p.decode_segment(h, z2).frames, a.frames) < 1e-3);
    CHECK(bit_equal(p.decode_frames(h, z), a.frames));
    CHECK_THROWS_AS(p.decode_segment(h, rand_latent(7, rng)), DimensionError);
  }

  TEST_CASE("default dims decode to F by D") {
    Rng rng(1);
    const Prior p(std::make_shared<PriorParams>(init_prior_params(PriorDims{}, rng)));
    const MotionSegment m = p.decode_segment(HistoryWindow(Tensor2(2, 276)), Latent{std::vector<float>(64)});
    CHECK(m.length() == 8);
    CHECK(m.frames.cols() == 276);
  }

  TEST_CASE("encode segment and reparameterize") {
    const Prior p = small_prior();
    Rng rng(3);
    const HistoryWindow h = rand_history(p.dims(), rng);
    const Tensor2 fut = testing_support::rand_t(8, 12, rng);
    const auto [m1, v1] = p.encode_segment(h, fut);
    const auto [m2, v2] = p.encode_segment(h, fut);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
    CHECK(m1.dim() == 8);
    CHECK(v1.dim() == 8);
    Rng r(4);
    // zero variance (log-variance -inf) collapses the sample onto the mean
    CHECK(reparameterize(m1, Latent{std::vector<float>(8, -INFINITY)}, r) == m1);
    CHECK_FALSE(reparameterize(m1, Latent{std::vector<float>(8, 0.0f)}, r) == m1);
    CHECK_THROWS_AS(p.encode_segment(h, testing_support::rand_t(7, 12, rng)), DimensionError);
  }

  TEST_CASE("zero deltas are neutral and nonzero deltas are not") {
    const Prior p = small_prior();
    Rng rng(5);
    const HistoryWindow h = rand_history(p.dims(), rng);
    const Latent z = rand_latent(8, rng);
    const TextEmbedding w = p.embed_text("wave");
    const Latent bare = p.predict_clean_latent(z, 3, h, w);
    ModulationDelta zero{"z", {}};
    for (int l = 0; l < 2; ++l) zero.layers[l] = Tensor2(p.dims().tokens(), 16);
    FixedDeltas fz(zero);
    CHECK(p.predict_clean_latent(z, 3, h, w, &fz) == bare);
    CHECK(p.predict_clean_latent(z, 3, h, w) == bare);
    ModulationDelta big = zero;
    big.layers[1](p.dims().tokens() - 1, 0) = 10.0f;
    FixedDeltas fb(big);
    CHECK_FALSE(p.predict_clean_latent(z, 3, h, w, &fb) == bare);
    ModulationDelta bad{"b", {{5, Tensor2(p.dims().tokens(), 16)}}};
    FixedDeltas fbad(bad);
    CHECK_THROWS_AS(p.predict_clean_latent(z, 3, h, w, &fbad), ConfigError);
  }

  TEST_CASE("sampler recovers a constant prediction") {
    StubDenoiser stub;
    Rng zr(9);
    stub.fixed = rand_latent(6, zr);
    GenerationConfig cfg;
    const DiffusionSchedule sched = DiffusionSchedule::linear(cfg.steps);
    const HistoryWindow h(Tensor2(2, 3));
    TextEmbedding w{std::vector<float>(4, 1.0f), false};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      stub.cond_calls = stub.uncond_calls = 0;
      const Latent out = ddpm_sample(stub, h, w, nullptr, cfg, sched, rng);
      for (std::size_t k = 0; k < 6; ++k) REQUIRE(std::abs(out.values[k] - stub.fixed.values[k]) < 1e-5);
      REQUIRE(stub.cond_calls == 10);
      REQUIRE(stub.uncond_calls == 10);
    }
  }

  TEST_CASE("unit guidance ignores the unconditional branch") {
    StubDenoiser a, b;
    Rng zr(1);
    a.fixed = b.fixed = rand_latent(5, zr);
    b.garbage = Latent{std::vector<float>(5, 1e6f)};
    GenerationConfig cfg;
    cfg.guidance_scale = 1.0;
    const DiffusionSchedule sched = DiffusionSchedule::linear(cfg.steps);
    TextEmbedding w{std::vector<float>(4, 1.0f), false};
    Rng r1(3), r2(3);
    const HistoryWindow h(Tensor2(2, 3));
    CHECK(ddpm_sample(a, h, w, nullptr, cfg, sched, r1) == ddpm_sample(b, h, w, nullptr, cfg, sched, r2));
  }

  TEST_CASE("rollout length history and determinism") {
    const Prior p = small_prior();
    GenerationConfig cfg;
    cfg.steps = 3;
    const HistoryWindow seed(Tensor2(2, 12));
    Rng r0(1);
    CHECK(rollout(p, "walk", 0, {}, cfg, seed, r0).motion.length() == 0);
    Rng r1(1), r2(1);
    const RolloutResult a = rollout(p, "walk", 3, {}, cfg, seed, r1);
    const RolloutResult b = rollout(p, "walk", 3, {}, cfg, seed, r2);
    CHECK(a.motion.length() == 24);
    CHECK(bit_equal(a.motion.frames, b.motion.frames));
    CHECK(bit_equal(a.histories[0].frames(), slice_rows(a.motion.frames, 6, 8)));
    // segment 2 decodes from the history left by segment 1
    CHECK(bit_equal(p.decode_segment(a.histories[0], a.latents[1]).frames, slice_rows(a.motion.frames, 8, 16)));
  }

  TEST_CASE("rollout provider failures carry the segment index") {
    const Prior p = small_prior();
    GenerationConfig cfg;
    cfg.steps = 2;
    Rng rng(1);
    ContextProvider bad = [](std::size_t seg, const HistoryWindow&) -> std::shared_ptr<const DeltaSource> {
      if (seg == 1) throw std::runtime_error("boom");
      return nullptr;
    };
    try {
      rollout(p, "x", 3, bad, cfg, HistoryWindow(Tensor2(2, 12)), rng);
      FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
      CHECK(e.segment() == 1);
    }
  }

  TEST_CASE("rollout invariants over small H and F") {
    for (std::size_t h = 1; h <= 8; h += 3)
      for (std::size_t f = 1; f <= 8; f += 3) {
        const Prior p = small_prior(1, h, f);
        GenerationConfig cfg;
        cfg.history = h;
        cfg.future = f;
        cfg.steps = 1;
        Rng rng(h * 10 + f);
        const RolloutResult r = rollout(p, "go", 4, {}, cfg, HistoryWindow(Tensor2(h, 12)), rng);
        REQUIRE(r.motion.length() == 4 * f);
        for (std::size_t s = 0; s < 4; ++s) {
          const std::size_t end = (s + 1) * f;
          REQUIRE(r.histories[s].length() == h);
          for (std::size_t k = 0; k < std::min(h, end); ++k)
            REQUIRE(bit_equal(slice_rows(r.histories[s].frames(), h - 1 - k, h - k),
                              slice_rows(r.motion.frames, end - 1 - k, end - k)));
        }
      }
  }

  TEST_CASE("losses") {
    Rng rng(4);
    const Tensor2 a = testing_support::rand_t(3, 4, rng), b = testing_support::rand_t(3, 4, rng);
    const Latent za = rand_latent(5, rng), zb = rand_latent(5, rng);
    const Losses same = losses(a, a, za, za);
    CHECK(same.rec == 0.0);
    Tensor2 plus = a;
    for (float& v : plus.data()) v += 1.0f;
    CHECK(losses(a, plus, za, za).rec == doctest::Approx(1.0));
    double rec = 0.0, lat = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) rec += std::pow(double(a.data()[i]) - b.data()[i], 2);
    for (std::size_t i = 0; i < 5; ++i) lat += std::pow(double(za.values[i]) - zb.values[i], 2);
    const Losses l = losses(a, b, za, zb);
    CHECK(l.rec == doctest::Approx(rec / a.size()));
    CHECK(l.latent == doctest::Approx(lat / 5));
    CHECK_THROWS_AS(losses(a, testing_support::rand_t(2, 4, rng), za, zb), DimensionError);
  }
}
