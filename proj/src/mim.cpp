#include "remogen/mim.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace remogen {

std::string_view to_string(ContextSource s) {
  switch (s) {
    case ContextSource::kOthers: return "others";
    case ContextSource::kScene: return "scene";
    case ContextSource::kDynamic: return "dynamic";
  }
  return "others";
}

ContextSource context_source_from_string(std::string_view s) {
  if (s == "others") return ContextSource::kOthers;
  if (s == "scene") return ContextSource::kScene;
  if (s == "dynamic") return ContextSource::kDynamic;
  throw ConfigError("unknown context source: " + std::string(s));
}

std::size_t MimParams::width() const { return blocks.empty() ? 0 : blocks.front().self_attn.width(); }

MimBlockParams init_mim_block(std::size_t width, std::size_t heads, std::size_t ffn_mult, Rng& rng, bool live) {
  using params::init_linear;
  MimBlockParams b;
  b.ln_self = layer_norm_identity(width);
  b.self_attn = init_attention(width, heads, rng);
  b.ln_cross = layer_norm_identity(width);
  b.cross_attn = init_attention(width, heads, rng);
  b.rel_bias = init_rel_bias(heads, rng);
  b.film = init_linear(width, 2 * width, rng);
  b.ln_ffn = layer_norm_identity(width);
  b.ffn_in = init_linear(width, ffn_mult * width, rng);
  b.ffn_out = init_linear(ffn_mult * width, width, rng, !live);
  b.gate = init_linear(width, width, rng, !live);
  if (live) {
    b.ffn_out.weight = scale(b.ffn_out.weight, 0.1);
    b.gate.weight = scale(b.gate.weight, 0.1);
  }
  return b;
}

MimParams init_mim_params(std::string id, ContextSource source, const MimShape& shape, Rng& rng, bool live) {
  using params::init_linear;
  if (source == ContextSource::kDynamic) throw ConfigError("MIM modules take others or scene context");
  MimParams p;
  p.id = std::move(id);
  p.source = source;
  p.injection_layers = shape.injection_layers;
  std::sort(p.injection_layers.begin(), p.injection_layers.end());
  if (std::adjacent_find(p.injection_layers.begin(), p.injection_layers.end()) != p.injection_layers.end()) {
    throw ConfigError("MIM: duplicate injection layer");
  }
  const std::size_t w = shape.width;
  if (source == ContextSource::kOthers) {
    p.others.input = init_linear(shape.feature_dim, w, rng);
    std::size_t dilation = 1;
    for (std::size_t l = 0; l < shape.tcn_layers; ++l) {
      CausalConv conv;
      conv.dilation = dilation;
      for (std::size_t k = 0; k < shape.tcn_kernel; ++k) {
        Tensor2 tap = seeded_init(w, 2 * w, InitScheme::kUniformFan, rng);
        conv.taps.push_back(scale(tap, 1.0 / std::sqrt(static_cast<double>(shape.tcn_kernel))));
      }
      conv.bias = Tensor2(1, 2 * w);
      p.others.layers.push_back(std::move(conv));
      dilation *= 2;
    }
  } else {
    const std::size_t patch = kScenePatch * kScenePatch * kScenePatch;
    p.scene.patch = init_linear(patch, w, rng);
    p.scene.positions = random_normal(kSceneTokens, w, rng, 0.02);
    p.scene.ln = layer_norm_identity(w);
    p.scene.attn = init_attention(w, shape.heads, rng);
  }
  for (std::size_t i = 0; i < p.injection_layers.size(); ++i) {
    p.blocks.push_back(init_mim_block(w, shape.heads, shape.ffn_mult, rng, live));
  }
  return p;
}

ContextTokens encode_others(const Tensor2& partner_frames, const OthersEncoderParams& p) {
  if (partner_frames.rows() == 0) throw DimensionError("encode_others: empty partner window");
  if (partner_frames.cols() != p.input.in_features()) {
    throw DimensionError("encode_others: partner feature width " + std::to_string(partner_frames.cols()) +
                         " != " + std::to_string(p.input.in_features()));
  }
  Tensor2 x = apply(p.input, partner_frames);
  const std::size_t T = x.rows(), w = x.cols();
  for (const CausalConv& conv : p.layers) {
    if (conv.bias.size() != 2 * w) throw DimensionError("encode_others: conv bias width mismatch");
    Tensor2 pre(T, 2 * w);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < 2 * w; ++c) pre(t, c) = conv.bias(0, c);
    for (std::size_t k = 0; k < conv.taps.size(); ++k) {
      const std::size_t shift = k * conv.dilation;
      if (shift >= T) break;
      const Tensor2 contrib = matmul(slice_rows(x, 0, T - shift), conv.taps[k]);
      for (std::size_t t = shift; t < T; ++t) {
        auto dst = pre.row(t);
        auto src = contrib.row(t - shift);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
    }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < w; ++c) {
        const double gated = std::tanh(static_cast<double>(pre(t, c))) * sigmoid(pre(t, w + c));
        x(t, c) = static_cast<float>(x(t, c) + gated);
      }
  }
  return {std::move(x), ContextSource::kOthers};
}

ContextTokens encode_scene(const EgoVoxelBlock& block, const SceneEncoderParams& p) {
  constexpr std::size_t n = EgoBox::kCells;
  if (block.occupancy.size() != n * n * n) throw DimensionError("encode_scene: block must be 32^3");
  constexpr std::size_t patch = kScenePatch * kScenePatch * kScenePatch;
  if (p.patch.in_features() != patch) throw DimensionError("encode_scene: patch embedding expects 512 inputs");
  Tensor2 patches(kSceneTokens, patch);
  for (std::size_t pi = 0; pi < kScenePatchesPerAxis; ++pi)
    for (std::size_t pj = 0; pj < kScenePatchesPerAxis; ++pj)
      for (std::size_t pk = 0; pk < kScenePatchesPerAxis; ++pk) {
        const std::size_t token = (pi * kScenePatchesPerAxis + pj) * kScenePatchesPerAxis + pk;
        for (std::size_t a = 0; a < kScenePatch; ++a)
          for (std::size_t b = 0; b < kScenePatch; ++b)
            for (std::size_t c = 0; c < kScenePatch; ++c) {
              const bool occ = block.at(pi * kScenePatch + a, pj * kScenePatch + b, pk * kScenePatch + c);
              patches(token, (a * kScenePatch + b) * kScenePatch + c) = occ ? 1.0f : 0.0f;
            }
      }
  Tensor2 x = apply(p.patch, patches);
  add_inplace(x, p.positions);
  const Tensor2 normed = layer_norm(x, p.ln);
  add_inplace(x, mha_forward(normed, normed, p.attn));
  return {std::move(x), ContextSource::kScene};
}

Tensor2 mim_block_forward(const Tensor2& h, const ContextTokens& context, const MimBlockParams& p) {
  if (context.tokens.cols() != p.cross_attn.width()) throw DimensionError("mim_block_forward: context width mismatch");
  return mim_block_forward(h, project_kv(context.tokens, p.cross_attn), p);
}

Tensor2 mim_block_forward(const Tensor2& h, const KeyValue& context_kv, const MimBlockParams& p) {
  const std::size_t w = p.self_attn.width();
  if (h.cols() != w) {
    throw DimensionError("mim_block_forward: feature width " + std::to_string(h.cols()) + " != block width " +
                         std::to_string(w));
  }
  if (p.film.out_features() != 2 * w) throw DimensionError("mim_block_forward: FiLM head must output 2·width");

  Tensor2 h1 = h;
  {
    const Tensor2 normed = layer_norm(h, p.ln_self);
    add_inplace(h1, mha_forward(normed, normed, p.self_attn));
  }
  const auto bias = relative_bias(h.rows(), context_kv.length(), p.rel_bias);
  const Tensor2 r = mha_forward(layer_norm(h1, p.ln_cross), context_kv, p.cross_attn, bias);
  const Tensor2 film = apply(p.film, r);

  Tensor2 mod(h.rows(), w);
  for (std::size_t t = 0; t < h.rows(); ++t)
    for (std::size_t c = 0; c < w; ++c) {
      const double gamma = std::tanh(static_cast<double>(film(t, c)));
      const double beta = std::tanh(static_cast<double>(film(t, w + c)));
      mod(t, c) = static_cast<float>((1.0 + gamma) * h1(t, c) + beta);
    }
  Tensor2 ffn = apply(p.ffn_out, apply_gelu(apply(p.ffn_in, layer_norm(mod, p.ln_ffn))));
  add_inplace(ffn, mod);
  return apply(p.gate, sub(ffn, h));
}

void CompositionWeights::validate() const {
  if (alpha.empty()) throw ConfigError("composition weights: need at least one module weight");
  if (!(epsilon > 0.0)) throw ConfigError("composition weights: epsilon must be positive");
  for (const auto& [id, a] : alpha) {
    if (!std::isfinite(a)) throw ConfigError("composition weights: non-finite alpha for " + id);
  }
}

namespace {

double alpha_for(const CompositionWeights& w, const std::string& id) {
  auto it = w.alpha.find(id);
  if (it == w.alpha.end()) throw ConfigError("composition weights: no alpha for module '" + id + "'");
  return it->second;
}

void check_compatible(std::span<const ModulationDelta> deltas) {
  if (deltas.empty()) throw EmptyInputError("compose_deltas: no deltas");
  const auto& ref = deltas.front().layers;
  for (const auto& d : deltas) {
    if (d.layers.size() != ref.size()) throw DimensionError("compose_deltas: layer sets differ");
    for (const auto& [layer, t] : d.layers) {
      auto it = ref.find(layer);
      if (it == ref.end()) throw DimensionError("compose_deltas: layer sets differ");
      if (!it->second.same_shape(t)) throw DimensionError("compose_deltas: residual shapes differ");
    }
  }
}

double squared_norm(const Tensor2& t) {
  double s = 0.0;
  for (float v : t.data()) s += static_cast<double>(v) * v;
  return s;
}

}  // namespace

ModulationDelta sum_deltas(std::span<const ModulationDelta> deltas, const CompositionWeights& w) {
  check_compatible(deltas);
  ModulationDelta out;
  out.module_id = "composed";
  for (const auto& [layer, t] : deltas.front().layers) {
    std::vector<double> acc(t.size(), 0.0);
    for (const auto& d : deltas) {
      const double a = alpha_for(w, d.module_id);
      const auto src = d.layers.at(layer).data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += a * src[i];
    }
    Tensor2 sum(t.rows(), t.cols());
    for (std::size_t i = 0; i < acc.size(); ++i) sum.data()[i] = static_cast<float>(acc[i]);
    out.layers.emplace(layer, std::move(sum));
  }
  return out;
}

ModulationDelta compose_deltas(std::span<const ModulationDelta> deltas, const CompositionWeights& w) {
  w.validate();
  check_compatible(deltas);
  if (deltas.size() == 1 && alpha_for(w, deltas.front().module_id) == 1.0) {
    return deltas.front();  // exact pass: single module at unit weight
  }
  ModulationDelta total = sum_deltas(deltas, w);

  auto clamp = [&](const std::vector<int>& layers) {
    double total_sq = 0.0;
    for (int l : layers) total_sq += squared_norm(total.layers.at(l));
    double strongest = 0.0;
    for (const auto& d : deltas) {
      double sq = 0.0;
      for (int l : layers) sq += squared_norm(d.layers.at(l));
      strongest = std::max(strongest, std::sqrt(sq));
    }
    const double s = std::min(1.0, strongest / (std::sqrt(total_sq) + w.epsilon));
    if (s >= 1.0) return;
    for (int l : layers)
      for (float& v : total.layers.at(l).data()) v = static_cast<float>(s * v);
  };

  std::vector<int> all;
  for (const auto& [layer, _] : total.layers) all.push_back(layer);
  if (w.scope == ClampScope::kJoint) {
    clamp(all);
  } else {
    for (int l : all) clamp({l});
  }
  return total;
}

MimComposer::MimComposer(std::vector<ActiveModule> modules, CompositionWeights weights)
    : modules_(std::move(modules)), weights_(std::move(weights)) {
  weights_.validate();
  for (auto& m : modules_) {
    if (!m.module) throw ConfigError("MIM composer: null module");
    alpha_for(weights_, m.module->id);
    if (m.context.tokens.cols() != m.module->width()) {
      throw DimensionError("MIM composer: context width does not match module '" + m.module->id + "'");
    }
    m.cross_kv.clear();
    for (const auto& b : m.module->blocks) m.cross_kv.push_back(project_kv(m.context.tokens, b.cross_attn));
  }
}

std::vector<int> MimComposer::injection_layers() const {
  std::set<int> layers;
  for (const auto& m : modules_) layers.insert(m.module->injection_layers.begin(), m.module->injection_layers.end());
  return {layers.begin(), layers.end()};
}

std::optional<Tensor2> MimComposer::delta(int layer, const Tensor2& hidden) const {
  std::vector<ModulationDelta> parts;
  for (const auto& m : modules_) {
    const auto& layers = m.module->injection_layers;
    const auto it = std::find(layers.begin(), layers.end(), layer);
    if (it == layers.end()) continue;
    const auto idx = static_cast<std::size_t>(it - layers.begin());
    ModulationDelta d;
    d.module_id = m.module->id;
    d.layers.emplace(layer, mim_block_forward(hidden, m.cross_kv[idx], m.module->blocks[idx]));
    parts.push_back(std::move(d));
  }
  if (parts.empty()) return std::nullopt;
  return compose_deltas(parts, weights_).layers.at(layer);
}

}  // namespace remogen
