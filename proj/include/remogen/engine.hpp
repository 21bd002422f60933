#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "remogen/codec.hpp"
#include "remogen/config.hpp"
#include "remogen/fwsr.hpp"
#include "remogen/metrics.hpp"
#include "remogen/mim.hpp"
#include "remogen/prior.hpp"

namespace remogen {

// Everything loaded from one weight archive.
struct Model {
  FeatureLayout layout;
  std::shared_ptr<const PriorParams> prior;
  std::map<std::string, std::shared_ptr<const MimParams>> modules;  // "hhi" (others), "hsi" (scene)
  std::shared_ptr<const FwsrParams> fwsr;
  Normalizer normalizer;
  std::uint64_t seed = 0;
};

struct ModelShape {
  FeatureLayout layout;
  PriorDims prior;
  MimShape mim;
  FwsrShape fwsr;

  // Sizes that follow from the layout and the prior dims.
  static ModelShape defaults(const FeatureLayout& layout = {});
};

// Seeded random prior, zero-gated adapters unless live_adapters is set, and
// a normalizer fitted on synthetic canonical motion.
Model init_model(const ModelShape& shape, std::uint64_t seed, bool live_adapters = false);
WeightArchive model_to_archive(const Model& m);
Model model_from_archive(const WeightArchive& a);

// Canonicalized, featurized synthetic walking sequence.
Tensor2 synthetic_motion_features(const FeatureLayout& layout, std::size_t frames, Rng& rng);

// Throws ConfigError when the config's architecture keys disagree with the weights.
void check_config_against_model(const EngineConfig& cfg, const Model& m);

// The generation loop shared by the CLI, the stream runner and the bench.
// Inputs and outputs are raw feature rows; the prior works on normalized ones.
class Engine {
 public:
  Engine(std::shared_ptr<const Model> model, EngineConfig cfg, std::shared_ptr<const VoxelGrid> scene = nullptr);
  // the refiner keeps a reference to fwsr_
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  // Take effect at the next segment boundary.
  void set_text(std::string text);
  void set_alpha(std::map<std::string, double> alpha);

  void push_partner(std::span<const float> raw_frame);
  // Uses the last H rows (or repeats the first when fewer).
  void seed_history(const Tensor2& raw_frames);

  Tensor2 sample_segment();  // F frames
  Tensor2 fwsr_step();       // one frame, sampling a new segment when needed
  Tensor2 slide_step();      // one frame from a fresh full segment

  std::vector<std::string> active_modules() const;
  const HistoryWindow& history() const { return history_; }  // normalized
  std::size_t frames_generated() const { return generated_; }
  std::size_t partner_frames() const { return partner_.size(); }
  bool mid_segment() const { return refiner_ && !refiner_->done(); }
  const EngineConfig& config() const { return cfg_; }
  const Model& model() const { return *model_; }
  const Prior& prior() const { return prior_; }

 private:
  void begin_segment();
  std::shared_ptr<const DeltaSource> build_deltas();
  Latent sample_latent();
  Tensor2 emit(const Tensor2& normalized_rows);

  std::shared_ptr<const Model> model_;
  EngineConfig cfg_;
  std::shared_ptr<const VoxelGrid> scene_;
  Prior prior_;
  DiffusionSchedule schedule_;
  Rng rng_;
  HistoryWindow history_;
  std::string text_;
  TextEmbedding text_embedding_;
  std::map<std::string, double> alpha_;
  std::optional<std::string> pending_text_;
  std::optional<std::map<std::string, double>> pending_alpha_;
  std::vector<std::vector<float>> partner_;  // normalized
  DynamicContext dyn_;
  FwsrParams fwsr_;  // the model's FWSR weights with the configured beta_sens
  std::optional<SegmentRefiner> refiner_;
  std::vector<std::string> segment_modules_;
  std::size_t generated_ = 0;
};

struct BenchReport {
  LatencyBreakdown segment;
  LatencyBreakdown fwsr;
  LatencyBreakdown slide;

  double slide_over_fwsr() const;
  double fwsr_over_segment() const;
  nlohmann::json to_json() const;
  std::string table() const;  // component rows per path, seconds per frame
};

// slide_frames == 0 means the same count as the other paths.
BenchReport bench(std::shared_ptr<const Model> model, const EngineConfig& cfg, std::size_t n_frames = 1000,
                  std::size_t slide_frames = 0);

}  // namespace remogen
