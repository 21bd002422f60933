#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "remogen/motion.hpp"
#include "remogen/scene.hpp"

namespace remogen {

struct EmbeddingSet {
  Tensor2d vectors;  // N×E
  std::string source;

  std::size_t size() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  void validate() const;
};

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  static GaussianStats from(const EmbeddingSet& set);  // unbiased covariance, needs N >= 2
  void validate() const;
};

double frechet_distance(const GaussianStats& a, const GaussianStats& b);
double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b);

struct RetrievalReport {
  std::map<std::size_t, double> r_precision;         // Euclidean ranking, keyed by k
  std::map<std::size_t, double> r_precision_cosine;  // cosine-similarity ranking
  double mm_dist = 0.0;
  std::size_t batches = 0;
};

// Rank of the true pair = number of candidates strictly closer than it.
RetrievalReport retrieval_metrics(const EmbeddingSet& motion, const EmbeddingSet& text, std::size_t batch = 64,
                                  const std::vector<std::size_t>& top_k = {1, 2, 3});

inline constexpr std::size_t kDiversityAllPairsLimit = 512;
inline constexpr std::size_t kDiversityDefaultPairs = 300;

// pairs == 0 picks the default policy: all pairs for N <= 512, else 300
// sampled pairs. Sampled pairs are disjoint within each pass over a shuffle.
double diversity(const EmbeddingSet& emb, std::size_t pairs, Rng& rng);

// frames × joints world positions.
using JointFrames = std::vector<std::vector<Vec3>>;
JointFrames joints_from_features(const Tensor2& frames, const FeatureLayout& layout);

// Largest |x[t+3] - 3x[t+2] + 3x[t+1] - x[t]|·fps³ over frames and joints.
double peak_jerk(const JointFrames& joints, double fps);

struct CollisionOptions {
  double collision_radius = 0.05;
  double contact_radius = 0.1;
};

struct CollisionReport {
  double collision_pct = 0.0;
  std::optional<double> contact_precision;
  std::optional<double> contact_recall;
  std::vector<bool> collided;
  std::vector<bool> contacts;  // predicted, only with a partner
};

std::vector<bool> contact_labels(const JointFrames& ego, const JointFrames& partner, double radius);

// Precision/recall fall back to 1 when their denominator is empty.
CollisionReport collision_metrics(const JointFrames& ego, const VoxelGrid* grid, const JointFrames* partner,
                                  const CollisionOptions& opts = {},
                                  const std::vector<bool>* reference_contacts = nullptr);

// Motion embedder interface plus the seeded random-projection reference.
class MotionEmbedder {
 public:
  virtual ~MotionEmbedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t window() const = 0;
  // frames: window×D block → unit-norm embedding
  virtual std::vector<double> embed(const Tensor2& frames) const = 0;
};

class RandomProjectionEmbedder final : public MotionEmbedder {
 public:
  RandomProjectionEmbedder(std::size_t feature_dim, std::size_t window = 8, std::size_t dim = 16,
                           std::uint64_t seed = 7);
  std::size_t dim() const override { return dim_; }
  std::size_t window() const override { return window_; }
  std::vector<double> embed(const Tensor2& frames) const override;

 private:
  std::size_t feature_dim_, window_, dim_;
  Tensor2d projection_;  // (window·D)×dim
};

// Non-overlapping windows of a motion; a trailing partial window is dropped.
EmbeddingSet embed_motion(const MotionEmbedder& embedder, const Tensor2& frames, std::string source = {});

struct LatencyBreakdown {
  std::map<std::string, double> seconds;
  std::map<std::string, std::int64_t> counts;
  double total_seconds = 0.0;
  std::size_t frames = 0;

  double per_frame() const { return frames == 0 ? 0.0 : total_seconds / static_cast<double>(frames); }
  double component_per_frame(const std::string& name) const;
  // Sum of the non-overlapping top-level components.
  double top_level_seconds() const;
};

std::vector<std::string> top_level_components();

// Calls `step` (which returns the number of frames it produced) until at
// least n_frames exist, with a profiler installed on this thread.
LatencyBreakdown latency_profile(const std::function<std::size_t()>& step, std::size_t n_frames);

}  // namespace remogen
