#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "remogen/prior.hpp"
#include "remogen/scene.hpp"

namespace remogen {

enum class ContextSource { kOthers, kScene, kDynamic };

std::string_view to_string(ContextSource s);
ContextSource context_source_from_string(std::string_view s);

struct ContextTokens {
  Tensor2 tokens;  // T_c×width
  ContextSource source = ContextSource::kOthers;
};

// One causal, dilated convolution producing 2·width channels that feed a
// tanh/sigmoid gate.
struct CausalConv {
  std::vector<Tensor2> taps;  // kernel taps, each width×2width; tap k looks k·dilation frames back
  Tensor2 bias;               // 1×2width
  std::size_t dilation = 1;
};

struct OthersEncoderParams {
  Linear input;  // feature_dim → width
  std::vector<CausalConv> layers;
};

struct SceneEncoderParams {
  Linear patch;           // 512 → width
  Tensor2 positions;      // 64×width
  LayerNormParams ln;
  AttentionParams attn;
};

inline constexpr std::size_t kScenePatch = 8;
inline constexpr std::size_t kScenePatchesPerAxis = EgoBox::kCells / kScenePatch;
inline constexpr std::size_t kSceneTokens = kScenePatchesPerAxis * kScenePatchesPerAxis * kScenePatchesPerAxis;

struct MimBlockParams {
  LayerNormParams ln_self;
  AttentionParams self_attn;
  LayerNormParams ln_cross;
  AttentionParams cross_attn;
  RelBiasParams rel_bias;
  Linear film;  // width → 2·width, split into (gamma, beta)
  LayerNormParams ln_ffn;
  Linear ffn_in;
  Linear ffn_out;
  Linear gate;  // width → width; zero-initialized so a fresh module is neutral
};

struct MimParams {
  std::string id;
  ContextSource source = ContextSource::kOthers;
  OthersEncoderParams others;  // used when source == kOthers
  SceneEncoderParams scene;    // used when source == kScene
  std::vector<int> injection_layers;
  std::vector<MimBlockParams> blocks;  // parallel to injection_layers

  std::size_t width() const;

  template <class F>
  void visit(F&& f) {
    using params::visit;
    if (source == ContextSource::kOthers) {
      visit(f, "enc.input", others.input);
      for (std::size_t i = 0; i < others.layers.size(); ++i) {
        const std::string c = "enc.conv" + std::to_string(i);
        for (std::size_t k = 0; k < others.layers[i].taps.size(); ++k) {
          visit(f, c + ".tap" + std::to_string(k), others.layers[i].taps[k]);
        }
        visit(f, c + ".bias", others.layers[i].bias);
      }
    } else {
      visit(f, "enc.patch", scene.patch);
      visit(f, "enc.positions", scene.positions);
      visit(f, "enc.ln", scene.ln);
      visit(f, "enc.attn", scene.attn);
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string b = "block" + std::to_string(injection_layers[i]);
      visit(f, b + ".ln_self", blocks[i].ln_self);
      visit(f, b + ".self_attn", blocks[i].self_attn);
      visit(f, b + ".ln_cross", blocks[i].ln_cross);
      visit(f, b + ".cross_attn", blocks[i].cross_attn);
      visit(f, b + ".rel_bias", blocks[i].rel_bias);
      visit(f, b + ".film", blocks[i].film);
      visit(f, b + ".ln_ffn", blocks[i].ln_ffn);
      visit(f, b + ".ffn_in", blocks[i].ffn_in);
      visit(f, b + ".ffn_out", blocks[i].ffn_out);
      visit(f, b + ".gate", blocks[i].gate);
    }
  }
};

struct MimShape {
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t feature_dim = 276;
  std::size_t ffn_mult = 2;
  std::size_t tcn_layers = 3;
  std::size_t tcn_kernel = 3;
  std::vector<int> injection_layers{0, 1, 2, 3};
};

// Zero output gate and zero FFN output layer unless `live` is set, in which
// case both get small random weights (useful for exercising composition).
MimBlockParams init_mim_block(std::size_t width, std::size_t heads, std::size_t ffn_mult, Rng& rng,
                              bool live = false);
MimParams init_mim_params(std::string id, ContextSource source, const MimShape& shape, Rng& rng,
                          bool live = false);

// Causal temporal-convolution encoder; token t depends on frames <= t only.
ContextTokens encode_others(const Tensor2& partner_frames, const OthersEncoderParams& p);
// 4×4×4 patches of 8³ voxels → 64 tokens, then one self-attention layer.
ContextTokens encode_scene(const EgoVoxelBlock& block, const SceneEncoderParams& p);

// h' = h + SelfAttn(LN h); r = RelAttn(LN h', c); (γ, β) = FiLM(r);
// h_mod = (1 + tanh γ) ⊙ h' + tanh β; h_ffn = h_mod + FFN(LN h_mod);
// returns Gate(h_ffn - h).
Tensor2 mim_block_forward(const Tensor2& h, const ContextTokens& context, const MimBlockParams& p);
// Same, with the cross-attention keys/values of the context already projected.
Tensor2 mim_block_forward(const Tensor2& h, const KeyValue& context_kv, const MimBlockParams& p);

enum class ClampScope { kJoint, kPerLayer };

struct CompositionWeights {
  std::map<std::string, double> alpha;
  double epsilon = 1e-6;
  ClampScope scope = ClampScope::kJoint;

  void validate() const;
};

// Weighted sum of module residuals followed by the L2 clamp
// s = min(1, max_i ||Δ_i|| / (||Σ α_i Δ_i|| + ε)).
ModulationDelta compose_deltas(std::span<const ModulationDelta> deltas, const CompositionWeights& w);
// Weighted sum without the clamp.
ModulationDelta sum_deltas(std::span<const ModulationDelta> deltas, const CompositionWeights& w);

struct ActiveModule {
  std::shared_ptr<const MimParams> module;
  ContextTokens context;
  std::vector<KeyValue> cross_kv;  // per block; filled by MimComposer
};

// DeltaSource that runs every active module on the live hidden state at each
// injection layer and composes their residuals for that layer.
class MimComposer final : public DeltaSource {
 public:
  MimComposer(std::vector<ActiveModule> modules, CompositionWeights weights);

  std::vector<int> injection_layers() const override;
  std::optional<Tensor2> delta(int layer, const Tensor2& hidden) const override;

 private:
  std::vector<ActiveModule> modules_;
  CompositionWeights weights_;
};

}  // namespace remogen
