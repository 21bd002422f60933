#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "remogen/attention.hpp"
#include "remogen/motion.hpp"
#include "remogen/params.hpp"

namespace remogen {

struct Latent {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  Tensor2 as_row() const { return Tensor2(1, values.size(), values); }
  static Latent from_row(const Tensor2& row);
  bool operator==(const Latent&) const = default;
};

struct TextEmbedding {
  std::vector<float> values;
  bool null_flag = false;

  static TextEmbedding null(std::size_t dim) { return {std::vector<float>(dim, 0.0f), true}; }
};

// Architecture sizes of the frozen prior.
struct PriorDims {
  std::size_t history = 2;
  std::size_t future = 8;
  std::size_t feature_dim = 276;
  std::size_t latent_dim = 64;
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t ffn_mult = 2;
  std::size_t text_dim = 64;
  std::size_t text_buckets = 1024;
  std::size_t decoder_hidden = 128;

  // [time-step, text, H history tokens, latent]
  std::size_t tokens() const { return 2 + history + 1; }
  void validate() const;
  bool operator==(const PriorDims&) const = default;
};

// Linear variance schedule with x0-parameterized posterior coefficients.
struct DiffusionSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  static DiffusionSchedule linear(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.2);
  std::size_t steps() const { return betas.size(); }
  // Posterior q(x_{t-1} | x_t, x0) = N(c0*x0 + ct*x_t, var).
  double coef_x0(std::size_t t) const;
  double coef_xt(std::size_t t) const;
  double posterior_variance(std::size_t t) const;
};

struct GenerationConfig {
  std::size_t history = 2;
  std::size_t future = 8;
  std::size_t steps = 10;
  double guidance_scale = 2.0;
  std::uint64_t seed = 0;
  double fps = 10.0;

  void validate() const;
};

struct DenoiserBlock {
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_ffn;
  Linear ffn_in;
  Linear ffn_out;
};

struct PriorParams {
  PriorDims dims;
  Tensor2 text_table;  // buckets × text_dim
  Linear dec_in, dec_out;
  Linear enc_in, enc_out;
  Linear time_proj, text_proj, hist_proj, latent_in;
  Tensor2 null_token;  // 1×width
  Tensor2 positions;   // tokens × width
  std::vector<DenoiserBlock> blocks;
  LayerNormParams ln_out;
  Linear latent_out;

  template <class F>
  void visit(F&& f) {
    using params::visit;
    visit(f, "text_table", text_table);
    visit(f, "vae.dec_in", dec_in);
    visit(f, "vae.dec_out", dec_out);
    visit(f, "vae.enc_in", enc_in);
    visit(f, "vae.enc_out", enc_out);
    visit(f, "den.time_proj", time_proj);
    visit(f, "den.text_proj", text_proj);
    visit(f, "den.hist_proj", hist_proj);
    visit(f, "den.latent_in", latent_in);
    visit(f, "den.null_token", null_token);
    visit(f, "den.positions", positions);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string b = "den.block" + std::to_string(i);
      visit(f, b + ".ln_attn", blocks[i].ln_attn);
      visit(f, b + ".attn", blocks[i].attn);
      visit(f, b + ".ln_ffn", blocks[i].ln_ffn);
      visit(f, b + ".ffn_in", blocks[i].ffn_in);
      visit(f, b + ".ffn_out", blocks[i].ffn_out);
    }
    visit(f, "den.ln_out", ln_out);
    visit(f, "den.latent_out", latent_out);
  }
};

PriorParams init_prior_params(const PriorDims& dims, Rng& rng);

// Per-injection-layer residuals produced by one adapter (or a composition).
struct ModulationDelta {
  std::string module_id;
  std::map<int, Tensor2> layers;
};

// Supplies residuals added to the denoiser hidden state after selected blocks.
class DeltaSource {
 public:
  virtual ~DeltaSource() = default;
  virtual std::vector<int> injection_layers() const = 0;
  virtual std::optional<Tensor2> delta(int layer, const Tensor2& hidden) const = 0;
};

// Precomputed residuals, independent of the hidden state.
class FixedDeltas final : public DeltaSource {
 public:
  explicit FixedDeltas(ModulationDelta delta) : delta_(std::move(delta)) {}
  std::vector<int> injection_layers() const override;
  std::optional<Tensor2> delta(int layer, const Tensor2& hidden) const override;

 private:
  ModulationDelta delta_;
};

class LatentDenoiser {
 public:
  virtual ~LatentDenoiser() = default;
  virtual std::size_t latent_dim() const = 0;
  virtual Latent predict(const Latent& z_t, std::size_t step, const HistoryWindow& history,
                         const TextEmbedding& text, const DeltaSource* deltas) const = 0;
};

// The frozen single-person prior: text embedder, segment VAE and latent denoiser.
class Prior final : public LatentDenoiser {
 public:
  explicit Prior(std::shared_ptr<const PriorParams> params);

  const PriorParams& params() const { return *params_; }
  const PriorDims& dims() const { return params_->dims; }

  TextEmbedding embed_text(std::string_view text) const;
  MotionSegment decode_segment(const HistoryWindow& history, const Latent& z) const;
  // Same as decode_segment without profiler hooks; FWSR times its own decodes.
  Tensor2 decode_frames(const HistoryWindow& history, const Latent& z) const;
  // Returns (mean, log-variance).
  std::pair<Latent, Latent> encode_segment(const HistoryWindow& history, const Tensor2& future) const;
  Latent predict_clean_latent(const Latent& z_t, std::size_t step, const HistoryWindow& history,
                              const TextEmbedding& text, const DeltaSource* deltas = nullptr) const;

  std::size_t latent_dim() const override { return dims().latent_dim; }
  Latent predict(const Latent& z_t, std::size_t step, const HistoryWindow& history, const TextEmbedding& text,
                 const DeltaSource* deltas) const override {
    return predict_clean_latent(z_t, step, history, text, deltas);
  }

  // Token matrix fed to the first denoiser block.
  Tensor2 embed_tokens(const Latent& z_t, std::size_t step, const HistoryWindow& history,
                       const TextEmbedding& text) const;

 private:
  std::shared_ptr<const PriorParams> params_;
};

Latent reparameterize(const Latent& mean, const Latent& log_variance, Rng& rng);

// Classifier-free guided DDPM sampling in x0-parameterization; 2·steps
// denoiser calls (conditional then unconditional at every step).
Latent ddpm_sample(const LatentDenoiser& denoiser, const HistoryWindow& history, const TextEmbedding& text,
                   const DeltaSource* deltas, const GenerationConfig& cfg, const DiffusionSchedule& schedule,
                   Rng& rng);

using ContextProvider =
    std::function<std::shared_ptr<const DeltaSource>(std::size_t segment, const HistoryWindow& history)>;

struct RolloutResult {
  MotionSegment motion;
  std::vector<HistoryWindow> histories;  // history after each segment
  std::vector<Latent> latents;           // clean latent of each segment
};

RolloutResult rollout(const Prior& prior, std::string_view text, std::size_t n_segments,
                      const ContextProvider& context, const GenerationConfig& cfg, const HistoryWindow& seed,
                      Rng& rng);

struct Losses {
  double rec = 0.0;
  double latent = 0.0;
};

Losses losses(const Tensor2& future_true, const Tensor2& future_pred, const Latent& z_true, const Latent& z_pred);

// Token normalization used by the text embedder: lowercase, split on
// non-alphanumeric characters.
std::vector<std::string> text_tokens(std::string_view text);

}  // namespace remogen
