#pragma once

#include <functional>
#include <vector>

#include "remogen/prior.hpp"

namespace remogen {

struct SensitivityVector {
  std::vector<double> s;

  std::size_t dim() const { return s.size(); }
  void validate() const;
};

struct FwsrParams {
  Linear dyn_proj;  // feature_dim → d_z, applied to history and partner rows
  LayerNormParams dyn_ln;
  AttentionParams dyn_attn;    // self-attention over dynamic tokens
  AttentionParams cross_attn;  // query from z0, keys/values from c_dyn
  RelBiasParams rel_bias;
  Linear film;  // d_z → 2·d_z, split into (gamma, beta); zero at init
  double beta_sens = 1.0;

  std::size_t latent_dim() const { return cross_attn.width(); }
  std::size_t feature_dim() const { return dyn_proj.in_features(); }
  void validate() const;

  template <class F>
  void visit(F&& f) {
    using params::visit;
    visit(f, "dyn_proj", dyn_proj);
    visit(f, "dyn_ln", dyn_ln);
    visit(f, "dyn_attn", dyn_attn);
    visit(f, "cross_attn", cross_attn);
    visit(f, "rel_bias", rel_bias);
    visit(f, "film", film);
  }
};

struct FwsrShape {
  std::size_t latent_dim = 64;
  std::size_t feature_dim = 276;
  std::size_t heads = 4;
  double beta_sens = 1.0;
};

FwsrParams init_fwsr_params(const FwsrShape& shape, Rng& rng, bool live = false);

// Partner / context frames observed so far, indexed from 0.
class DynamicContext {
 public:
  DynamicContext(std::size_t feature_dim, std::size_t window);

  void push(std::span<const float> frame);
  std::size_t size() const { return frames_.size(); }
  std::size_t window_length() const { return window_; }
  // Last min(window, n) frames among those with index < upto. Asking past the
  // end of the stream returns the newest window available.
  Tensor2 window(std::size_t upto) const;

 private:
  std::size_t dim_;
  std::size_t window_;
  std::vector<std::vector<float>> frames_;
};

// Decoder view used by FWSR: (history, latent) → F×D frames.
using SegmentDecodeFn = std::function<Tensor2(const HistoryWindow&, const Latent&)>;
SegmentDecodeFn prior_decoder(const Prior& prior);

// s[d] = ||D(z0 + h e_d) - D(z0 - h e_d)|| / 2h, with the decoder bound to a history.
SensitivityVector estimate_sensitivity(const VectorFn& decoder, const Latent& z0, double h_step = kDefaultFdStep);
SensitivityVector estimate_sensitivity(const SegmentDecodeFn& decoder, const HistoryWindow& history,
                                       const Latent& z0, double h_step = kDefaultFdStep);
// Same quantity for the prior's decoder, with all 2·d_z probes decoded as one batch.
SensitivityVector estimate_sensitivity(const Prior& prior, const HistoryWindow& history, const Latent& z0,
                                       double h_step = kDefaultFdStep);

// Dynamic tokens → c_dyn, then (gamma, beta) for z0. Exposed for inspection.
struct FwsrModulation {
  std::vector<double> gamma;
  std::vector<double> beta;
};
FwsrModulation fwsr_modulation(const Latent& z0, const HistoryWindow& history, const Tensor2& dyn_window,
                               const FwsrParams& p);

// Δ = (1 + tanh γ) z0 + tanh β - z0;  z̃ = z0 + Δ / (1 + β_sens s).
Latent apply_safe_refinement(const Latent& z0, const FwsrModulation& m, const SensitivityVector& s,
                             double beta_sens);
Latent refine_latent(const Latent& z0, const HistoryWindow& history, const Tensor2& dyn_window,
                     const SensitivityVector& s, const FwsrParams& p);

// Per-frame loop for one segment. begin() takes the initial segment decoded
// from (M_h, z0) and returns frame 0; each next() refines z0 against the
// rolling history and newest window, re-decodes from the fixed M_h⁰, and
// returns the next frame.
class SegmentRefiner {
 public:
  SegmentRefiner(const FwsrParams& params, SegmentDecodeFn decode);

  Tensor2 begin(const Latent& z0, const HistoryWindow& history, const Tensor2& initial_segment,
                SensitivityVector s);
  Tensor2 next(const Tensor2& dyn_window);

  bool done() const { return frame_ >= future_; }
  std::size_t frame() const { return frame_; }
  const HistoryWindow& anchor_history() const { return anchor_; }
  const HistoryWindow& rolling_history() const { return rolling_; }

 private:
  const FwsrParams& params_;
  SegmentDecodeFn decode_;
  Latent z0_;
  SensitivityVector s_;
  HistoryWindow anchor_;   // M_h⁰
  HistoryWindow rolling_;  // M_h^{f-1}
  std::size_t frame_ = 0;
  std::size_t future_ = 0;
};

// F frames: F-1 refinements and F-1 decodes. The window for frame f is
// dyn.window(dyn_start + f + 1).
MotionSegment refine_segment(const Latent& z0, const HistoryWindow& history, const Tensor2& initial_segment,
                             const DynamicContext& dyn, std::size_t dyn_start, const SegmentDecodeFn& decoder,
                             const FwsrParams& params, const SensitivityVector& s, double fps = 10.0);

}  // namespace remogen
