#include "remogen/engine.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "remogen/profiler.hpp"

namespace remogen {

namespace {

constexpr const char* kWeightsFormat = "remogen-weights/1";
// Normalized partner features are clipped here; near-constant training
// features would otherwise blow up through the std floor.
constexpr float kPartnerClip = 10.0f;

template <class P>
void store(WeightArchive& a, const std::string& prefix, P& params) {
  params.visit([&](const std::string& name, Tensor2& t) { a.add(prefix + name, t); });
}

template <class P>
void fill(const WeightArchive& a, const std::string& prefix, P& params, std::set<std::string>& used) {
  params.visit([&](const std::string& name, Tensor2& t) {
    const std::string full = prefix + name;
    const ArchiveTensor* src = a.find(full);
    if (!src) throw FormatError("weights: missing tensor " + full);
    if (src->shape != std::vector<std::size_t>{t.rows(), t.cols()}) {
      throw FormatError("weights: tensor " + full + " has an unexpected shape");
    }
    t = Tensor2(t.rows(), t.cols(), src->values);
    used.insert(full);
  });
}

nlohmann::json dims_json(const PriorDims& d) {
  return {{"history", d.history},       {"future", d.future},     {"feature_dim", d.feature_dim},
          {"latent_dim", d.latent_dim}, {"width", d.width},       {"heads", d.heads},
          {"layers", d.layers},         {"ffn_mult", d.ffn_mult}, {"text_dim", d.text_dim},
          {"text_buckets", d.text_buckets}, {"decoder_hidden", d.decoder_hidden}};
}

PriorDims dims_from_json(const nlohmann::json& j) {
  PriorDims d;
  d.history = j.at("history");
  d.future = j.at("future");
  d.feature_dim = j.at("feature_dim");
  d.latent_dim = j.at("latent_dim");
  d.width = j.at("width");
  d.heads = j.at("heads");
  d.layers = j.at("layers");
  d.ffn_mult = j.at("ffn_mult");
  d.text_dim = j.at("text_dim");
  d.text_buckets = j.at("text_buckets");
  d.decoder_hidden = j.at("decoder_hidden");
  return d;
}

Vec3 ego_translation(std::span<const float> frame, const FeatureLayout& layout) {
  return feature_root_translation(frame, layout);
}

}  // namespace

ModelShape ModelShape::defaults(const FeatureLayout& layout) {
  ModelShape s;
  s.layout = layout;
  s.prior.feature_dim = layout.dim();
  s.mim.width = s.prior.width;
  s.mim.heads = s.prior.heads;
  s.mim.feature_dim = layout.dim();
  s.mim.ffn_mult = s.prior.ffn_mult;
  s.fwsr.latent_dim = s.prior.latent_dim;
  s.fwsr.feature_dim = layout.dim();
  return s;
}

Tensor2 synthetic_motion_features(const FeatureLayout& layout, std::size_t frames, Rng& rng) {
  const SyntheticMotionSpec spec = random_motion_spec(rng, layout.joints, frames);
  const RawPoseSequence seq = synthetic_sequence(spec);
  return featurize(transform_sequence(seq, canonical_transform(seq.frames.front())), layout).frames;
}

Model init_model(const ModelShape& shape, std::uint64_t seed, bool live_adapters) {
  if (shape.prior.feature_dim != shape.layout.dim() || shape.mim.feature_dim != shape.layout.dim() ||
      shape.fwsr.feature_dim != shape.layout.dim()) {
    throw ConfigError("model shape: feature widths disagree with the layout");
  }
  if (shape.mim.width != shape.prior.width || shape.fwsr.latent_dim != shape.prior.latent_dim) {
    throw ConfigError("model shape: adapter widths disagree with the prior");
  }
  const Rng root(seed, 0);
  Model m;
  m.seed = seed;
  m.layout = shape.layout;
  Rng r1 = root.fork(1), r2 = root.fork(2), r3 = root.fork(3), r4 = root.fork(4), r5 = root.fork(5);
  m.prior = std::make_shared<PriorParams>(init_prior_params(shape.prior, r1));
  m.modules["hhi"] =
      std::make_shared<MimParams>(init_mim_params("hhi", ContextSource::kOthers, shape.mim, r2, live_adapters));
  m.modules["hsi"] =
      std::make_shared<MimParams>(init_mim_params("hsi", ContextSource::kScene, shape.mim, r3, live_adapters));
  m.fwsr = std::make_shared<FwsrParams>(init_fwsr_params(shape.fwsr, r4, live_adapters));
  Tensor2 corpus(0, shape.layout.dim());
  for (int i = 0; i < 16; ++i) corpus = concat_rows(corpus, synthetic_motion_features(shape.layout, 40, r5));
  m.normalizer = fit_normalizer(corpus);
  return m;
}

WeightArchive model_to_archive(const Model& m) {
  WeightArchive a;
  a.meta["format"] = kWeightsFormat;
  a.meta["layout"] = m.layout.id();
  a.meta["seed"] = m.seed;
  a.meta["rng"] = "splitmix64-ctr/1";
  a.meta["prior"] = dims_json(m.prior->dims);
  a.meta["modules"] = nlohmann::json::array();
  for (const auto& [id, mp] : m.modules) {
    nlohmann::json e{{"id", id},
                     {"source", std::string(to_string(mp->source))},
                     {"injection_layers", mp->injection_layers},
                     {"heads", mp->blocks.empty() ? 0 : mp->blocks.front().self_attn.heads},
                     {"ffn_mult", mp->blocks.empty() ? 0 : mp->blocks.front().ffn_in.out_features() / mp->width()}};
    if (mp->source == ContextSource::kOthers) {
      e["tcn_layers"] = mp->others.layers.size();
      e["tcn_kernel"] = mp->others.layers.empty() ? 0 : mp->others.layers.front().taps.size();
    }
    a.meta["modules"].push_back(e);
  }
  a.meta["fwsr"] = {{"heads", m.fwsr->cross_attn.heads}, {"beta_sens", m.fwsr->beta_sens}};

  PriorParams prior = *m.prior;
  store(a, "prior.", prior);
  for (const auto& [id, mp] : m.modules) {
    MimParams copy = *mp;
    store(a, "mim." + id + ".", copy);
  }
  FwsrParams f = *m.fwsr;
  store(a, "fwsr.", f);
  a.add("norm.mean", m.normalizer.mean);
  a.add("norm.std", m.normalizer.std);
  return a;
}

Model model_from_archive(const WeightArchive& a) {
  Model m;
  std::set<std::string> used;
  try {
    if (a.meta.at("format").get<std::string>() != kWeightsFormat) throw FormatError("weights: unknown format tag");
    m.layout = FeatureLayout::from_id(a.meta.at("layout").get<std::string>());
    m.seed = a.meta.value("seed", std::uint64_t{0});
    const PriorDims dims = dims_from_json(a.meta.at("prior"));
    dims.validate();
    if (dims.feature_dim != m.layout.dim()) throw FormatError("weights: prior width disagrees with layout");
    Rng skeleton(0, 0);
    auto prior = std::make_shared<PriorParams>(init_prior_params(dims, skeleton));
    fill(a, "prior.", *prior, used);
    m.prior = prior;
    for (const auto& e : a.meta.at("modules")) {
      MimShape shape;
      shape.width = dims.width;
      shape.feature_dim = dims.feature_dim;
      shape.heads = e.at("heads");
      shape.ffn_mult = e.at("ffn_mult");
      shape.injection_layers = e.at("injection_layers").get<std::vector<int>>();
      shape.tcn_layers = e.value("tcn_layers", std::size_t{3});
      shape.tcn_kernel = e.value("tcn_kernel", std::size_t{3});
      for (int l : shape.injection_layers) {
        if (l < 0 || static_cast<std::size_t>(l) >= dims.layers) throw FormatError("weights: bad injection layer");
      }
      const std::string id = e.at("id");
      auto mp = std::make_shared<MimParams>(
          init_mim_params(id, context_source_from_string(e.at("source").get<std::string>()), shape, skeleton));
      fill(a, "mim." + id + ".", *mp, used);
      m.modules[id] = mp;
    }
    FwsrShape fs;
    fs.latent_dim = dims.latent_dim;
    fs.feature_dim = dims.feature_dim;
    fs.heads = a.meta.at("fwsr").at("heads");
    fs.beta_sens = a.meta.at("fwsr").at("beta_sens");
    auto fw = std::make_shared<FwsrParams>(init_fwsr_params(fs, skeleton));
    fill(a, "fwsr.", *fw, used);
    fw->validate();
    m.fwsr = fw;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights: malformed metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("weights: ") + e.what());
  }
  m.normalizer.mean = a.tensor2("norm.mean");
  m.normalizer.std = a.tensor2("norm.std");
  used.insert("norm.mean");
  used.insert("norm.std");
  if (m.normalizer.mean.cols() != m.layout.dim() || !m.normalizer.std.same_shape(m.normalizer.mean)) {
    throw FormatError("weights: normalizer width mismatch");
  }
  for (const auto& t : a.tensors) {
    if (!used.count(t.name)) throw FormatError("weights: unexpected tensor " + t.name);
  }
  return m;
}

void check_config_against_model(const EngineConfig& cfg, const Model& m) {
  const PriorDims& d = m.prior->dims;
  auto mismatch = [](const std::string& key, std::size_t c, std::size_t w) {
    throw ConfigError("config " + key + " = " + std::to_string(c) + " but the weights have " + std::to_string(w));
  };
  if (cfg.generation.history != d.history) mismatch("H", cfg.generation.history, d.history);
  if (cfg.generation.future != d.future) mismatch("F", cfg.generation.future, d.future);
  if (cfg.latent_dim != d.latent_dim) mismatch("d_z", cfg.latent_dim, d.latent_dim);
  if (cfg.width != d.width) mismatch("width", cfg.width, d.width);
  if (cfg.heads != d.heads) mismatch("heads", cfg.heads, d.heads);
  if (cfg.layers != d.layers) mismatch("layers", cfg.layers, d.layers);
  if (cfg.ffn_mult != d.ffn_mult) mismatch("ffn_mult", cfg.ffn_mult, d.ffn_mult);
  for (const auto& [id, mp] : m.modules) {
    if (mp->injection_layers != cfg.injection_layers) {
      throw ConfigError("config injection_layers differ from module '" + id + "' in the weights");
    }
  }
  for (const auto& [id, a] : cfg.alpha) {
    if (!m.modules.count(id)) throw ConfigError("config alpha names unknown module '" + id + "'");
  }
}

Engine::Engine(std::shared_ptr<const Model> model, EngineConfig cfg, std::shared_ptr<const VoxelGrid> scene)
    : model_(std::move(model)),
      cfg_(std::move(cfg)),
      scene_(std::move(scene)),
      prior_(model_->prior),
      schedule_(DiffusionSchedule::linear(cfg_.generation.steps)),
      rng_(cfg_.generation.seed, 0),
      dyn_(model_->layout.dim(), cfg_.generation.history),
      fwsr_(*model_->fwsr) {
  fwsr_.beta_sens = cfg_.beta_sens;
  cfg_.validate();
  check_config_against_model(cfg_, *model_);
  if (cfg_.clamp_scope == ClampScope::kJoint) {
    // each layer's residual depends on the already-modulated hidden state, so
    // all layers are never available at once inside a denoiser pass
    throw ConfigError("clamp_scope = joint is only available for offline compose_deltas; the engine clamps per_layer");
  }
  history_ = HistoryWindow(normalize(rest_history(model_->layout, cfg_.generation.history).frames(),
                                     model_->normalizer));
  text_ = cfg_.text;
  text_embedding_ = prior_.embed_text(text_);
  alpha_ = cfg_.alpha;
}

void Engine::set_text(std::string text) { pending_text_ = std::move(text); }

void Engine::set_alpha(std::map<std::string, double> alpha) {
  for (const auto& [id, a] : alpha) {
    if (!model_->modules.count(id)) throw ConfigError("alpha names unknown module '" + id + "'");
    if (!std::isfinite(a)) throw ConfigError("alpha for '" + id + "' is not finite");
  }
  pending_alpha_ = std::move(alpha);
}

void Engine::push_partner(std::span<const float> raw_frame) {
  if (raw_frame.size() != model_->layout.dim()) {
    throw DimensionError("partner frame has " + std::to_string(raw_frame.size()) + " features, expected " +
                         std::to_string(model_->layout.dim()));
  }
  prof::ScopedTimer timer(prof::kPrePost);
  const Tensor2 row(1, raw_frame.size(), std::vector<float>(raw_frame.begin(), raw_frame.end()));
  Tensor2 n = normalize(row, model_->normalizer);
  for (float& v : n.data()) v = std::clamp(v, -kPartnerClip, kPartnerClip);
  partner_.emplace_back(n.data().begin(), n.data().end());
  dyn_.push(n.row(0));
}

void Engine::seed_history(const Tensor2& raw_frames) {
  if (raw_frames.rows() == 0) throw EmptyInputError("seed_history: no frames");
  if (raw_frames.cols() != model_->layout.dim()) throw DimensionError("seed_history: feature width mismatch");
  const std::size_t H = cfg_.generation.history;
  Tensor2 rows(H, raw_frames.cols());
  for (std::size_t r = 0; r < H; ++r) {
    const std::size_t src = raw_frames.rows() >= H ? raw_frames.rows() - H + r : (r < H - raw_frames.rows() ? 0 : r - (H - raw_frames.rows()));
    std::copy(raw_frames.row(src).begin(), raw_frames.row(src).end(), rows.row(r).begin());
  }
  history_ = HistoryWindow(normalize(rows, model_->normalizer));
}

std::vector<std::string> Engine::active_modules() const { return segment_modules_; }

std::shared_ptr<const DeltaSource> Engine::build_deltas() {
  prof::ScopedTimer timer(prof::kContext);
  std::vector<ActiveModule> active;
  CompositionWeights weights;
  weights.epsilon = cfg_.epsilon;
  weights.scope = cfg_.clamp_scope;
  segment_modules_.clear();
  for (const auto& [id, a] : alpha_) {
    const auto& mp = model_->modules.at(id);
    ContextTokens ctx;
    if (mp->source == ContextSource::kOthers) {
      if (partner_.empty()) continue;  // nothing observed yet
      const std::size_t n = std::min(cfg_.others_window, partner_.size());
      Tensor2 window(n, model_->layout.dim());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& f = partner_[partner_.size() - n + i];
        std::copy(f.begin(), f.end(), window.row(i).begin());
      }
      ctx = encode_others(window, mp->others);
    } else if (mp->source == ContextSource::kScene) {
      EgoVoxelBlock block = EgoVoxelBlock::empty();
      if (scene_) {
        const Tensor2 last = normalize(slice_rows(history_.frames(), history_.length() - 1, history_.length()),
                                       model_->normalizer, true);
        const double yaw = feature_root_yaw(last.row(0), model_->layout);
        block = extract_ego_voxels(*scene_, RigidTransform::from_yaw(yaw, ego_translation(last.row(0), model_->layout)));
      }
      ctx = encode_scene(block, mp->scene);
    } else {
      continue;
    }
    active.push_back({mp, std::move(ctx), {}});
    weights.alpha[id] = a;
    segment_modules_.push_back(id);
  }
  if (active.empty()) return nullptr;
  return std::make_shared<MimComposer>(std::move(active), std::move(weights));
}

Latent Engine::sample_latent() {
  if (pending_text_) {
    text_ = std::move(*pending_text_);
    text_embedding_ = prior_.embed_text(text_);
    pending_text_.reset();
  }
  if (pending_alpha_) {
    alpha_ = std::move(*pending_alpha_);
    pending_alpha_.reset();
  }
  const auto deltas = build_deltas();
  return ddpm_sample(prior_, history_, text_embedding_, deltas.get(), cfg_.generation, schedule_, rng_);
}

Tensor2 Engine::emit(const Tensor2& normalized_rows) {
  prof::ScopedTimer timer(prof::kPrePost);
  generated_ += normalized_rows.rows();
  return normalize(normalized_rows, model_->normalizer, true);
}

Tensor2 Engine::sample_segment() {
  refiner_.reset();
  const Latent z0 = sample_latent();
  const MotionSegment seg = prior_.decode_segment(history_, z0);
  history_ = update_history(history_, seg);
  return emit(seg.frames);
}

void Engine::begin_segment() {
  const Latent z0 = sample_latent();
  const Tensor2 initial = prior_.decode_segment(history_, z0).frames;
  const HistoryWindow anchor = update_history(history_, slice_rows(initial, 0, 1));
  SensitivityVector s = estimate_sensitivity(prior_, anchor, z0, cfg_.h_step);
  refiner_.emplace(fwsr_, prior_decoder(prior_));
  const Tensor2 first = refiner_->begin(z0, history_, initial, std::move(s));
  history_ = update_history(history_, first);
}

Tensor2 Engine::fwsr_step() {
  if (!refiner_ || refiner_->done()) {
    begin_segment();
    return emit(slice_rows(history_.frames(), history_.length() - 1, history_.length()));
  }
  const Tensor2 frame = refiner_->next(dyn_.window(generated_ + 1));
  history_ = update_history(history_, frame);
  return emit(frame);
}

Tensor2 Engine::slide_step() {
  refiner_.reset();
  const Latent z0 = sample_latent();
  const MotionSegment seg = prior_.decode_segment(history_, z0);
  const Tensor2 first = slice_rows(seg.frames, 0, 1);
  history_ = update_history(history_, first);
  return emit(first);
}

double BenchReport::slide_over_fwsr() const {
  return fwsr.per_frame() > 0.0 ? slide.per_frame() / fwsr.per_frame() : 0.0;
}

double BenchReport::fwsr_over_segment() const {
  return segment.per_frame() > 0.0 ? fwsr.per_frame() / segment.per_frame() : 0.0;
}

namespace {

nlohmann::json breakdown_json(const LatencyBreakdown& b) {
  nlohmann::json j;
  j["frames"] = b.frames;
  j["total_s"] = b.total_seconds;
  j["per_frame_s"] = b.per_frame();
  j["components_s"] = b.seconds;
  j["counts"] = b.counts;
  return j;
}

}  // namespace

nlohmann::json BenchReport::to_json() const {
  return {{"segment", breakdown_json(segment)},
          {"fwsr", breakdown_json(fwsr)},
          {"slide", breakdown_json(slide)},
          {"slide_over_fwsr", slide_over_fwsr()},
          {"fwsr_over_segment", fwsr_over_segment()}};
}

std::string BenchReport::table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  const std::vector<std::pair<std::string, std::string>> rows{
      {"context encoding", prof::kContext}, {"denoising (total)", prof::kDenoise},
      {"  denoiser calls", prof::kDenoiser}, {"  MIM", prof::kMim},
      {"decode", prof::kDecode},             {"decoder sensitivity", prof::kSensitivity},
      {"FWSR iterations", prof::kFwsr},      {"  refinement block", prof::kFwsrModule},
      {"  re-decode", prof::kFwsrDecode},    {"pre/post", prof::kPrePost}};
  out << std::left << std::setw(24) << "component (s/frame)" << std::right << std::setw(12) << "segment"
      << std::setw(12) << "fwsr" << std::setw(12) << "slide" << "\n";
  for (const auto& [label, key] : rows) {
    out << std::left << std::setw(24) << label << std::right << std::setw(12) << segment.component_per_frame(key)
        << std::setw(12) << fwsr.component_per_frame(key) << std::setw(12) << slide.component_per_frame(key) << "\n";
  }
  out << std::left << std::setw(24) << "total per frame" << std::right << std::setw(12) << segment.per_frame()
      << std::setw(12) << fwsr.per_frame() << std::setw(12) << slide.per_frame() << "\n";
  out << "denoiser calls per segment: "
      << (segment.counts.count(prof::kDecode) && segment.counts.at(prof::kDecode) > 0
              ? static_cast<double>(segment.counts.count(prof::kDenoiser) ? segment.counts.at(prof::kDenoiser) : 0) /
                    static_cast<double>(segment.counts.at(prof::kDecode))
              : 0.0)
      << "\n";
  out << std::setprecision(2) << "slide / fwsr: " << slide_over_fwsr() << "x, fwsr / segment: "
      << fwsr_over_segment() << "x\n";
  return out.str();
}

BenchReport bench(std::shared_ptr<const Model> model, const EngineConfig& cfg, std::size_t n_frames,
                  std::size_t slide_frames) {
  if (slide_frames == 0) slide_frames = n_frames;
  Rng partner_rng(cfg.generation.seed, 0x70617274);
  const Tensor2 partner = synthetic_motion_features(model->layout, 64, partner_rng);

  auto run = [&](auto step_fn, std::size_t frames) {
    Engine engine(model, cfg);
    std::size_t k = 0;
    auto feed = [&](std::size_t n) {
      for (std::size_t i = 0; i < n; ++i, ++k) engine.push_partner(partner.row(k % partner.rows()));
    };
    return latency_profile(
        [&]() {
          return step_fn(engine, feed);
        },
        frames);
  };

  BenchReport r;
  const std::size_t F = cfg.generation.future;
  r.segment = run(
      [F](Engine& e, auto& feed) {
        feed(F);
        return e.sample_segment().rows();
      },
      n_frames);
  r.fwsr = run(
      [](Engine& e, auto& feed) {
        feed(1);
        return e.fwsr_step().rows();
      },
      n_frames);
  r.slide = run(
      [](Engine& e, auto& feed) {
        feed(1);
        return e.slide_step().rows();
      },
      slide_frames);
  return r;
}

}  // namespace remogen
