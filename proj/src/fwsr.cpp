#include "remogen/fwsr.hpp"

#include <cmath>

#include "remogen/profiler.hpp"

namespace remogen {

void SensitivityVector::validate() const {
  for (double v : s) {
    if (!std::isfinite(v) || v < 0.0) throw NumericError("sensitivity entries must be finite and non-negative");
  }
}

void FwsrParams::validate() const {
  cross_attn.validate();
  dyn_attn.validate();
  const std::size_t dz = latent_dim();
  if (dyn_proj.out_features() != dz || dyn_attn.width() != dz) {
    throw DimensionError("FWSR: dynamic projection width differs from latent width");
  }
  if (film.in_features() != dz || film.out_features() != 2 * dz) {
    throw DimensionError("FWSR: FiLM head must map d_z → 2·d_z");
  }
  if (!(beta_sens >= 0.0) || !std::isfinite(beta_sens)) throw ConfigError("FWSR: beta_sens must be >= 0");
}

FwsrParams init_fwsr_params(const FwsrShape& shape, Rng& rng, bool live) {
  using params::init_linear;
  FwsrParams p;
  p.dyn_proj = init_linear(shape.feature_dim, shape.latent_dim, rng);
  p.dyn_ln = layer_norm_identity(shape.latent_dim);
  p.dyn_attn = init_attention(shape.latent_dim, shape.heads, rng);
  p.cross_attn = init_attention(shape.latent_dim, shape.heads, rng);
  p.rel_bias = init_rel_bias(shape.heads, rng);
  p.film = init_linear(shape.latent_dim, 2 * shape.latent_dim, rng, !live);
  if (live) p.film.weight = scale(p.film.weight, 0.1);
  p.beta_sens = shape.beta_sens;
  p.validate();
  return p;
}

DynamicContext::DynamicContext(std::size_t feature_dim, std::size_t window) : dim_(feature_dim), window_(window) {
  if (window == 0) throw ConfigError("dynamic context window must be >= 1");
}

void DynamicContext::push(std::span<const float> frame) {
  if (frame.size() != dim_) throw DimensionError("dynamic context: frame width mismatch");
  frames_.emplace_back(frame.begin(), frame.end());
}

Tensor2 DynamicContext::window(std::size_t upto) const {
  const std::size_t end = std::min(upto, frames_.size());
  const std::size_t len = std::min(window_, end);
  Tensor2 out(len, dim_);
  for (std::size_t i = 0; i < len; ++i) {
    const auto& f = frames_[end - len + i];
    std::copy(f.begin(), f.end(), out.row(i).begin());
  }
  return out;
}

SegmentDecodeFn prior_decoder(const Prior& prior) {
  return [&prior](const HistoryWindow& h, const Latent& z) { return prior.decode_frames(h, z); };
}

SensitivityVector estimate_sensitivity(const VectorFn& decoder, const Latent& z0, double h_step) {
  if (!(h_step > 0.0)) throw ConfigError("sensitivity: h_step must be positive");
  prof::ScopedTimer timer(prof::kSensitivity);
  const std::vector<double> x(z0.values.begin(), z0.values.end());
  const Tensor2d jac = finite_diff_jacobian(decoder, x, h_step);
  SensitivityVector out{std::vector<double>(x.size(), 0.0)};
  for (std::size_t i = 0; i < jac.rows(); ++i)
    for (std::size_t d = 0; d < jac.cols(); ++d) out.s[d] += jac(i, d) * jac(i, d);
  for (double& v : out.s) v = std::sqrt(v);
  out.validate();
  return out;
}

SensitivityVector estimate_sensitivity(const SegmentDecodeFn& decoder, const HistoryWindow& history,
                                       const Latent& z0, double h_step) {
  if (!(h_step > 0.0)) throw ConfigError("sensitivity: h_step must be positive");
  prof::ScopedTimer timer(prof::kSensitivity);
  SensitivityVector s{std::vector<double>(z0.dim(), 0.0)};
  for (std::size_t k = 0; k < z0.dim(); ++k) {
    Latent plus = z0, minus = z0;
    plus.values[k] = static_cast<float>(z0.values[k] + h_step);
    minus.values[k] = static_cast<float>(z0.values[k] - h_step);
    const Tensor2 a = decoder(history, plus), b = decoder(history, minus);
    if (!a.same_shape(b)) throw DimensionError("sensitivity: decoder output shape changed");
    if (!all_finite(a.data()) || !all_finite(b.data())) throw NumericError("sensitivity: non-finite decode");
    // latents are float, so the probes are not exactly z0 +- h
    const double step = static_cast<double>(plus.values[k]) - minus.values[k];
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = (static_cast<double>(a.data()[i]) - b.data()[i]) / step;
      acc += diff * diff;
    }
    s.s[k] = std::sqrt(acc);
  }
  s.validate();
  return s;
}

SensitivityVector estimate_sensitivity(const Prior& prior, const HistoryWindow& history, const Latent& z0,
                                       double h_step) {
  if (!(h_step > 0.0)) throw ConfigError("sensitivity: h_step must be positive");
  const PriorDims& d = prior.dims();
  if (z0.dim() != d.latent_dim) throw DimensionError("sensitivity: latent width mismatch");
  if (history.length() != d.history || history.dim() != d.feature_dim) {
    throw DimensionError("sensitivity: history shape mismatch");
  }
  prof::ScopedTimer timer(prof::kSensitivity);
  const std::size_t dz = d.latent_dim, hist = d.history * d.feature_dim;
  Tensor2 in(2 * dz, hist + dz);
  for (std::size_t r = 0; r < 2 * dz; ++r) {
    auto row = in.row(r);
    std::copy(history.frames().data().begin(), history.frames().data().end(), row.begin());
    std::copy(z0.values.begin(), z0.values.end(), row.begin() + hist);
    const std::size_t k = r / 2;
    const double sign = r % 2 == 0 ? 1.0 : -1.0;
    row[hist + k] = static_cast<float>(z0.values[k] + sign * h_step);
  }
  const PriorParams& p = prior.params();
  const Tensor2 out = apply(p.dec_out, apply_silu(apply(p.dec_in, in)));
  SensitivityVector s{std::vector<double>(dz, 0.0)};
  for (std::size_t k = 0; k < dz; ++k) {
    const auto plus = out.row(2 * k), minus = out.row(2 * k + 1);
    // the float probes are not exactly z0 ± h; divide by the step actually taken
    const double step = static_cast<double>(in(2 * k, hist + k)) - in(2 * k + 1, hist + k);
    double acc = 0.0;
    for (std::size_t i = 0; i < plus.size(); ++i) {
      // the shared last-frame offset cancels; the squashing does not
      const double diff = (static_cast<double>(static_cast<float>(std::tanh(plus[i]))) -
                           static_cast<float>(std::tanh(minus[i]))) / step;
      acc += diff * diff;
    }
    s.s[k] = std::sqrt(acc);
  }
  s.validate();
  return s;
}

FwsrModulation fwsr_modulation(const Latent& z0, const HistoryWindow& history, const Tensor2& dyn_window,
                               const FwsrParams& p) {
  const std::size_t dz = p.latent_dim();
  if (z0.dim() != dz) throw DimensionError("refine_latent: latent width " + std::to_string(z0.dim()) + " != " +
                                           std::to_string(dz));
  if (history.dim() != p.feature_dim() || (dyn_window.rows() > 0 && dyn_window.cols() != p.feature_dim())) {
    throw DimensionError("refine_latent: frame width differs from the FWSR projection input");
  }
  const Tensor2 rows = dyn_window.rows() > 0 ? concat_rows(history.frames(), dyn_window) : history.frames();
  Tensor2 tokens = apply(p.dyn_proj, rows);
  {
    const Tensor2 normed = layer_norm(tokens, p.dyn_ln);
    add_inplace(tokens, mha_forward(normed, normed, p.dyn_attn));
  }
  // Query sits at the next frame (0); history at -H..-1, partner window at -W..-1.
  std::vector<double> q_pos{0.0};
  std::vector<double> k_pos;
  const auto H = static_cast<double>(history.length());
  const auto W = static_cast<double>(dyn_window.rows());
  for (std::size_t i = 0; i < history.length(); ++i) k_pos.push_back(static_cast<double>(i) - H);
  for (std::size_t i = 0; i < dyn_window.rows(); ++i) k_pos.push_back(static_cast<double>(i) - W);
  const auto bias = relative_bias(q_pos, k_pos, p.rel_bias);
  const Tensor2 r = mha_forward(z0.as_row(), tokens, p.cross_attn, bias);
  const Tensor2 gb = apply(p.film, r);
  FwsrModulation m;
  m.gamma.resize(dz);
  m.beta.resize(dz);
  for (std::size_t d = 0; d < dz; ++d) {
    m.gamma[d] = gb(0, d);
    m.beta[d] = gb(0, dz + d);
  }
  return m;
}

Latent apply_safe_refinement(const Latent& z0, const FwsrModulation& m, const SensitivityVector& s,
                             double beta_sens) {
  const std::size_t dz = z0.dim();
  if (m.gamma.size() != dz || m.beta.size() != dz || s.dim() != dz) {
    throw DimensionError("refine_latent: modulation / sensitivity width differs from latent width");
  }
  Latent out = z0;
  for (std::size_t d = 0; d < dz; ++d) {
    const double z = z0.values[d];
    const double delta = (1.0 + std::tanh(m.gamma[d])) * z + std::tanh(m.beta[d]) - z;
    out.values[d] = static_cast<float>(z + delta / (1.0 + beta_sens * s.s[d]));
  }
  return out;
}

Latent refine_latent(const Latent& z0, const HistoryWindow& history, const Tensor2& dyn_window,
                     const SensitivityVector& s, const FwsrParams& p) {
  prof::ScopedTimer timer(prof::kFwsrModule);
  prof::count(prof::kFwsrModule);
  return apply_safe_refinement(z0, fwsr_modulation(z0, history, dyn_window, p), s, p.beta_sens);
}

SegmentRefiner::SegmentRefiner(const FwsrParams& params, SegmentDecodeFn decode)
    : params_(params), decode_(std::move(decode)) {
  if (!decode_) throw ConfigError("segment refiner: decoder required");
}

Tensor2 SegmentRefiner::begin(const Latent& z0, const HistoryWindow& history, const Tensor2& initial_segment,
                              SensitivityVector s) {
  if (initial_segment.rows() == 0) throw InsufficientFramesError("segment refiner: empty initial segment");
  if (initial_segment.cols() != history.dim()) throw DimensionError("segment refiner: segment width mismatch");
  if (s.dim() != z0.dim()) throw DimensionError("segment refiner: sensitivity width mismatch");
  z0_ = z0;
  s_ = std::move(s);
  future_ = initial_segment.rows();
  Tensor2 first = slice_rows(initial_segment, 0, 1);
  anchor_ = update_history(history, first);
  rolling_ = anchor_;
  frame_ = 1;
  return first;
}

Tensor2 SegmentRefiner::next(const Tensor2& dyn_window) {
  if (frame_ == 0) throw ConfigError("segment refiner: begin() not called");
  if (done()) throw ConfigError("segment refiner: segment already complete");
  prof::ScopedTimer timer(prof::kFwsr);
  const Latent refined = refine_latent(z0_, rolling_, dyn_window, s_, params_);
  Tensor2 seg;
  {
    prof::ScopedTimer dt(prof::kFwsrDecode);
    prof::count(prof::kFwsrDecode);
    seg = decode_(anchor_, refined);
  }
  if (seg.rows() != future_ || seg.cols() != anchor_.dim()) {
    throw DimensionError("segment refiner: decoder returned a segment of the wrong shape");
  }
  Tensor2 frame = slice_rows(seg, frame_, frame_ + 1);
  rolling_ = update_history(rolling_, frame);
  ++frame_;
  return frame;
}

MotionSegment refine_segment(const Latent& z0, const HistoryWindow& history, const Tensor2& initial_segment,
                             const DynamicContext& dyn, std::size_t dyn_start, const SegmentDecodeFn& decoder,
                             const FwsrParams& params, const SensitivityVector& s, double fps) {
  SegmentRefiner r(params, decoder);
  MotionSegment out{r.begin(z0, history, initial_segment, s), fps};
  while (!r.done()) {
    const std::size_t f = r.frame();
    out.frames = concat_rows(out.frames, r.next(dyn.window(dyn_start + f + 1)));
  }
  return out;
}

}  // namespace remogen
