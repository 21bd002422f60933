#include "remogen/prior.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "remogen/profiler.hpp"

namespace remogen {

namespace {

Tensor2 time_embedding(std::size_t step, std::size_t width) {
  Tensor2 e(1, width);
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e(0, i) = static_cast<float>(std::sin(static_cast<double>(step) * freq));
    e(0, half + i) = static_cast<float>(std::cos(static_cast<double>(step) * freq));
  }
  return e;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void check_latent(const Latent& z, std::size_t dim, const char* what) {
  if (z.dim() != dim) {
    throw DimensionError(std::string(what) + ": latent has " + std::to_string(z.dim()) + " dims, expected " +
                         std::to_string(dim));
  }
}

void check_history(const HistoryWindow& h, const PriorDims& d, const char* what) {
  if (h.length() != d.history || h.dim() != d.feature_dim) {
    throw DimensionError(std::string(what) + ": history must be " + std::to_string(d.history) + "x" +
                         std::to_string(d.feature_dim));
  }
}

}  // namespace

Latent Latent::from_row(const Tensor2& row) {
  return {std::vector<float>(row.data().begin(), row.data().end())};
}

void PriorDims::validate() const {
  if (history == 0 || future == 0) throw ConfigError("prior dims: history and future must be >= 1");
  if (feature_dim == 0 || latent_dim == 0 || text_dim == 0 || text_buckets == 0 || decoder_hidden == 0) {
    throw ConfigError("prior dims: sizes must be positive");
  }
  if (heads == 0 || width % heads != 0 || width % 2 != 0) {
    throw ConfigError("prior dims: width must be even and divisible by heads");
  }
  if (layers == 0 || ffn_mult == 0) throw ConfigError("prior dims: layers and ffn_mult must be >= 1");
}

DiffusionSchedule DiffusionSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw ConfigError("diffusion schedule: steps must be >= 1");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw ConfigError("diffusion schedule: need 0 < beta_start <= beta_end < 1");
  }
  DiffusionSchedule s;
  double bar = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double beta = steps == 1 ? beta_start
                                   : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                                      static_cast<double>(steps - 1);
    bar *= 1.0 - beta;
    s.betas.push_back(beta);
    s.alpha_bars.push_back(bar);
  }
  return s;
}

double DiffusionSchedule::coef_x0(std::size_t t) const {
  const double prev = t == 0 ? 1.0 : alpha_bars[t - 1];
  return std::sqrt(prev) * betas[t] / (1.0 - alpha_bars[t]);
}

double DiffusionSchedule::coef_xt(std::size_t t) const {
  const double prev = t == 0 ? 1.0 : alpha_bars[t - 1];
  return std::sqrt(1.0 - betas[t]) * (1.0 - prev) / (1.0 - alpha_bars[t]);
}

double DiffusionSchedule::posterior_variance(std::size_t t) const {
  const double prev = t == 0 ? 1.0 : alpha_bars[t - 1];
  return betas[t] * (1.0 - prev) / (1.0 - alpha_bars[t]);
}

void GenerationConfig::validate() const {
  if (history == 0 || future == 0 || steps == 0) throw ConfigError("generation config: H, F, steps must be >= 1");
  if (!(fps > 0.0)) throw ConfigError("generation config: fps must be positive");
  if (!std::isfinite(guidance_scale)) throw ConfigError("generation config: guidance scale must be finite");
}

PriorParams init_prior_params(const PriorDims& d, Rng& rng) {
  d.validate();
  using params::init_linear;
  PriorParams p;
  p.dims = d;
  p.text_table = random_normal(d.text_buckets, d.text_dim, rng);
  const std::size_t hist_flat = d.history * d.feature_dim;
  p.dec_in = init_linear(hist_flat + d.latent_dim, d.decoder_hidden, rng);
  p.dec_out = init_linear(d.decoder_hidden, d.future * d.feature_dim, rng);
  p.enc_in = init_linear(hist_flat + d.future * d.feature_dim, d.decoder_hidden, rng);
  p.enc_out = init_linear(d.decoder_hidden, 2 * d.latent_dim, rng);
  p.time_proj = init_linear(d.width, d.width, rng);
  p.text_proj = init_linear(d.text_dim, d.width, rng);
  p.hist_proj = init_linear(d.feature_dim, d.width, rng);
  p.latent_in = init_linear(d.latent_dim, d.width, rng);
  p.null_token = random_normal(1, d.width, rng, 0.02);
  p.positions = random_normal(d.tokens(), d.width, rng, 0.02);
  for (std::size_t l = 0; l < d.layers; ++l) {
    DenoiserBlock b;
    b.ln_attn = layer_norm_identity(d.width);
    b.attn = init_attention(d.width, d.heads, rng);
    b.ln_ffn = layer_norm_identity(d.width);
    b.ffn_in = init_linear(d.width, d.ffn_mult * d.width, rng);
    b.ffn_out = init_linear(d.ffn_mult * d.width, d.width, rng);
    p.blocks.push_back(std::move(b));
  }
  p.ln_out = layer_norm_identity(d.width);
  p.latent_out = init_linear(d.width, d.latent_dim, rng);
  return p;
}

std::vector<int> FixedDeltas::injection_layers() const {
  std::vector<int> out;
  for (const auto& [layer, _] : delta_.layers) out.push_back(layer);
  return out;
}

std::optional<Tensor2> FixedDeltas::delta(int layer, const Tensor2& hidden) const {
  auto it = delta_.layers.find(layer);
  if (it == delta_.layers.end()) return std::nullopt;
  if (!it->second.same_shape(hidden)) throw DimensionError("fixed delta: shape does not match hidden state");
  return it->second;
}

Prior::Prior(std::shared_ptr<const PriorParams> params) : params_(std::move(params)) {
  if (!params_) throw ConfigError("prior: null parameters");
  params_->dims.validate();
  if (params_->blocks.size() != params_->dims.layers) throw DimensionError("prior: block count mismatch");
}

std::vector<std::string> text_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

TextEmbedding Prior::embed_text(std::string_view text) const {
  const PriorDims& d = dims();
  const auto tokens = text_tokens(text);
  if (tokens.empty()) return TextEmbedding::null(d.text_dim);
  std::vector<double> acc(d.text_dim, 0.0);
  for (const auto& tok : tokens) {
    const auto row = params_->text_table.row(fnv1a(tok) % d.text_buckets);
    for (std::size_t i = 0; i < d.text_dim; ++i) acc[i] += row[i];
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  TextEmbedding out{std::vector<float>(d.text_dim), false};
  for (std::size_t i = 0; i < d.text_dim; ++i) out.values[i] = static_cast<float>(norm > 0 ? acc[i] / norm : 0.0);
  return out;
}

MotionSegment Prior::decode_segment(const HistoryWindow& history, const Latent& z) const {
  prof::ScopedTimer timer(prof::kDecode);
  prof::count(prof::kDecode);
  return {decode_frames(history, z), 10.0};
}

Tensor2 Prior::decode_frames(const HistoryWindow& history, const Latent& z) const {
  const PriorDims& d = dims();
  check_history(history, d, "decode_segment");
  check_latent(z, d.latent_dim, "decode_segment");
  Tensor2 in(1, d.history * d.feature_dim + d.latent_dim);
  std::copy(history.frames().data().begin(), history.frames().data().end(), in.data().begin());
  std::copy(z.values.begin(), z.values.end(), in.data().begin() + d.history * d.feature_dim);
  const Tensor2 hidden = apply_silu(apply(params_->dec_in, in));
  const Tensor2 flat = apply(params_->dec_out, hidden);
  Tensor2 out(d.future, d.feature_dim);
  // offsets from the last history frame are squashed to (-1, 1) so an
  // untrained decoder drifts at most linearly over a long rollout
  const auto last = history.frames().row(d.history - 1);
  for (std::size_t f = 0; f < d.future; ++f)
    for (std::size_t c = 0; c < d.feature_dim; ++c)
      out(f, c) = last[c] + static_cast<float>(std::tanh(flat(0, f * d.feature_dim + c)));
  return out;
}

std::pair<Latent, Latent> Prior::encode_segment(const HistoryWindow& history, const Tensor2& future) const {
  const PriorDims& d = dims();
  check_history(history, d, "encode_segment");
  if (future.rows() != d.future || future.cols() != d.feature_dim) {
    throw DimensionError("encode_segment: future segment must be F×D");
  }
  Tensor2 in(1, (d.history + d.future) * d.feature_dim);
  std::copy(history.frames().data().begin(), history.frames().data().end(), in.data().begin());
  std::copy(future.data().begin(), future.data().end(), in.data().begin() + d.history * d.feature_dim);
  const Tensor2 out = apply(params_->enc_out, apply_silu(apply(params_->enc_in, in)));
  Latent mean{std::vector<float>(out.data().begin(), out.data().begin() + d.latent_dim)};
  Latent logvar{std::vector<float>(out.data().begin() + d.latent_dim, out.data().end())};
  return {std::move(mean), std::move(logvar)};
}

Tensor2 Prior::embed_tokens(const Latent& z_t, std::size_t step, const HistoryWindow& history,
                            const TextEmbedding& text) const {
  const PriorDims& d = dims();
  const PriorParams& p = *params_;
  check_history(history, d, "denoiser");
  check_latent(z_t, d.latent_dim, "denoiser");
  if (text.values.size() != d.text_dim) throw DimensionError("denoiser: text embedding width mismatch");

  Tensor2 h(d.tokens(), d.width);
  auto put = [&](std::size_t r, const Tensor2& row) {
    std::copy(row.data().begin(), row.data().end(), h.row(r).begin());
  };
  put(0, apply(p.time_proj, time_embedding(step, d.width)));
  put(1, text.null_flag ? p.null_token : apply(p.text_proj, Tensor2(1, d.text_dim, text.values)));
  const Tensor2 hist = apply(p.hist_proj, history.frames());
  for (std::size_t r = 0; r < d.history; ++r) put(2 + r, slice_rows(hist, r, r + 1));
  put(d.tokens() - 1, apply(p.latent_in, z_t.as_row()));
  add_inplace(h, p.positions);
  return h;
}

Latent Prior::predict_clean_latent(const Latent& z_t, std::size_t step, const HistoryWindow& history,
                                   const TextEmbedding& text, const DeltaSource* deltas) const {
  const PriorDims& d = dims();
  const PriorParams& p = *params_;
  if (deltas) {
    for (int layer : deltas->injection_layers()) {
      if (layer < 0 || static_cast<std::size_t>(layer) >= d.layers) {
        throw ConfigError("denoiser: injection layer " + std::to_string(layer) + " outside [0, " +
                          std::to_string(d.layers) + ")");
      }
    }
  }
  prof::count(prof::kDenoiser);
  Tensor2 h = embed_tokens(z_t, step, history, text);
  for (std::size_t l = 0; l < d.layers; ++l) {
    {
      prof::ScopedTimer timer(prof::kDenoiser);
      const DenoiserBlock& b = p.blocks[l];
      const Tensor2 normed = layer_norm(h, b.ln_attn);
      add_inplace(h, mha_forward(normed, normed, b.attn));
      add_inplace(h, apply(b.ffn_out, apply_gelu(apply(b.ffn_in, layer_norm(h, b.ln_ffn)))));
    }
    if (deltas) {
      prof::ScopedTimer timer(prof::kMim);
      if (auto delta = deltas->delta(static_cast<int>(l), h)) add_inplace(h, *delta);
    }
  }
  prof::ScopedTimer timer(prof::kDenoiser);
  const Tensor2 last = slice_rows(h, d.tokens() - 1, d.tokens());
  return Latent::from_row(apply(p.latent_out, layer_norm(last, p.ln_out)));
}

Latent reparameterize(const Latent& mean, const Latent& log_variance, Rng& rng) {
  if (mean.dim() != log_variance.dim()) throw DimensionError("reparameterize: dimension mismatch");
  Latent out = mean;
  for (std::size_t i = 0; i < mean.dim(); ++i) {
    const double sigma = std::exp(0.5 * log_variance.values[i]);
    const double eps = rng.normal();
    out.values[i] = static_cast<float>(mean.values[i] + sigma * eps);
  }
  return out;
}

Latent ddpm_sample(const LatentDenoiser& denoiser, const HistoryWindow& history, const TextEmbedding& text,
                   const DeltaSource* deltas, const GenerationConfig& cfg, const DiffusionSchedule& schedule,
                   Rng& rng) {
  cfg.validate();
  if (schedule.steps() != cfg.steps) throw ConfigError("ddpm_sample: schedule length differs from config steps");
  prof::ScopedTimer timer(prof::kDenoise);
  const std::size_t dz = denoiser.latent_dim();
  const TextEmbedding uncond = TextEmbedding::null(text.values.size());
  const double s = cfg.guidance_scale;

  Latent z{std::vector<float>(dz)};
  for (float& v : z.values) v = static_cast<float>(rng.normal());

  for (std::size_t i = 0; i < cfg.steps; ++i) {
    const std::size_t t = cfg.steps - 1 - i;
    const Latent cond = denoiser.predict(z, t, history, text, deltas);
    const Latent uncond_pred = denoiser.predict(z, t, history, uncond, deltas);
    if (cond.dim() != dz || uncond_pred.dim() != dz) throw DimensionError("ddpm_sample: denoiser output width mismatch");
    const double c0 = schedule.coef_x0(t), ct = schedule.coef_xt(t);
    const double sigma = t == 0 ? 0.0 : std::sqrt(schedule.posterior_variance(t));
    for (std::size_t k = 0; k < dz; ++k) {
      // s*c + (1-s)*u keeps s = 1 exactly independent of the unconditional branch.
      const double guided = s * cond.values[k] + (1.0 - s) * uncond_pred.values[k];
      double next = guided;
      if (t > 0) next = c0 * guided + ct * z.values[k] + sigma * rng.normal();
      z.values[k] = static_cast<float>(next);
    }
  }
  return z;
}

RolloutResult rollout(const Prior& prior, std::string_view text, std::size_t n_segments,
                      const ContextProvider& context, const GenerationConfig& cfg, const HistoryWindow& seed,
                      Rng& rng) {
  cfg.validate();
  const PriorDims& d = prior.dims();
  if (cfg.history != d.history || cfg.future != d.future) {
    throw ConfigError("rollout: generation config H/F differ from the prior's architecture");
  }
  const DiffusionSchedule schedule = DiffusionSchedule::linear(cfg.steps);
  const TextEmbedding w = prior.embed_text(text);
  RolloutResult out;
  out.motion = MotionSegment{Tensor2(0, d.feature_dim), cfg.fps};
  HistoryWindow history = seed;
  for (std::size_t i = 0; i < n_segments; ++i) {
    std::shared_ptr<const DeltaSource> deltas;
    if (context) {
      try {
        deltas = context(i, history);
      } catch (const std::exception& e) {
        throw ProviderError(static_cast<int>(i), e.what());
      }
    }
    const Latent z0 = ddpm_sample(prior, history, w, deltas.get(), cfg, schedule, rng);
    const MotionSegment seg = prior.decode_segment(history, z0);
    out.motion.frames = concat_rows(out.motion.frames, seg.frames);
    history = update_history(history, seg);
    out.histories.push_back(history);
    out.latents.push_back(z0);
  }
  return out;
}

Losses losses(const Tensor2& future_true, const Tensor2& future_pred, const Latent& z_true, const Latent& z_pred) {
  if (!future_true.same_shape(future_pred)) throw DimensionError("losses: motion shape mismatch");
  if (z_true.dim() != z_pred.dim()) throw DimensionError("losses: latent dimension mismatch");
  Losses l;
  if (future_true.size() > 0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < future_true.size(); ++i) {
      const double e = static_cast<double>(future_pred.data()[i]) - future_true.data()[i];
      acc += e * e;
    }
    l.rec = acc / static_cast<double>(future_true.size());
  }
  if (z_true.dim() > 0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < z_true.dim(); ++i) {
      const double e = static_cast<double>(z_pred.values[i]) - z_true.values[i];
      acc += e * e;
    }
    l.latent = acc / static_cast<double>(z_true.dim());
  }
  return l;
}

}  // namespace remogen
