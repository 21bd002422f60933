#include "remogen/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "remogen/profiler.hpp"

namespace remogen {

namespace {

Eigen::MatrixXd to_eigen(const Tensor2d& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  return m;
}

double psd_tolerance(const Eigen::MatrixXd& m) { return 1e-8 * std::max(1.0, m.cwiseAbs().maxCoeff()); }

// Symmetric PSD square root; negative eigenvalues within tolerance clip to 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = psd_tolerance(sym);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol) throw NumericError("matrix is not positive semi-definite");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double den = std::sqrt(aa * bb);
  return den > 0.0 ? ab / den : 0.0;
}

}  // namespace

void EmbeddingSet::validate() const {
  if (size() == 0) throw EmptyInputError("embedding set '" + source + "' is empty");
  for (double v : vectors.data()) {
    if (!std::isfinite(v)) throw NumericError("embedding set '" + source + "' has non-finite entries");
  }
}

GaussianStats GaussianStats::from(const EmbeddingSet& set) {
  set.validate();
  if (set.size() < 2) throw InsufficientFramesError("Gaussian statistics need at least 2 samples");
  const Eigen::MatrixXd x = to_eigen(set.vectors);
  GaussianStats g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.covariance = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  return g;
}

void GaussianStats::validate() const {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw DimensionError("Gaussian statistics: covariance shape differs from mean");
  }
  const double tol = psd_tolerance(covariance);
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw NumericError("Gaussian statistics: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -tol) {
    throw NumericError("Gaussian statistics: covariance is not PSD");
  }
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size()) {
    throw DimensionError("frechet_distance: embedding widths " + std::to_string(a.mean.size()) + " and " +
                         std::to_string(b.mean.size()) + " differ");
  }
  a.validate();
  b.validate();
  const Eigen::MatrixXd sa = psd_sqrt(a.covariance);
  const Eigen::MatrixXd cross = psd_sqrt(sa * b.covariance * sa);
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double trace = a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
  return std::max(0.0, mean_term + trace);
}

double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim() != b.dim()) throw DimensionError("frechet_distance: embedding widths differ");
  return frechet_distance(GaussianStats::from(a), GaussianStats::from(b));
}

RetrievalReport retrieval_metrics(const EmbeddingSet& motion, const EmbeddingSet& text, std::size_t batch,
                                  const std::vector<std::size_t>& top_k) {
  motion.validate();
  text.validate();
  if (motion.size() != text.size()) throw DimensionError("retrieval: motion and text sets must be paired");
  if (motion.dim() != text.dim()) throw DimensionError("retrieval: embedding widths differ");
  if (batch == 0 || motion.size() < batch) {
    throw ConfigError("retrieval: need at least one full batch of " + std::to_string(batch));
  }
  RetrievalReport rep;
  rep.batches = motion.size() / batch;
  std::map<std::size_t, std::size_t> hits, hits_cos;
  double mm = 0.0;
  for (std::size_t b = 0; b < rep.batches; ++b) {
    const std::size_t base = b * batch;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto m = motion.vectors.row(base + i);
      const double true_d = distance(m, text.vectors.row(base + i));
      const double true_c = cosine(m, text.vectors.row(base + i));
      mm += true_d;
      std::size_t closer = 0, closer_cos = 0;
      for (std::size_t j = 0; j < batch; ++j) {
        if (j == i) continue;
        if (distance(m, text.vectors.row(base + j)) < true_d) ++closer;
        if (cosine(m, text.vectors.row(base + j)) > true_c) ++closer_cos;
      }
      for (std::size_t k : top_k) {
        if (closer < k) ++hits[k];
        if (closer_cos < k) ++hits_cos[k];
      }
    }
  }
  const double n = static_cast<double>(rep.batches * batch);
  for (std::size_t k : top_k) {
    rep.r_precision[k] = static_cast<double>(hits[k]) / n;
    rep.r_precision_cosine[k] = static_cast<double>(hits_cos[k]) / n;
  }
  rep.mm_dist = mm / n;
  return rep;
}

double diversity(const EmbeddingSet& emb, std::size_t pairs, Rng& rng) {
  emb.validate();
  const std::size_t n = emb.size();
  if (n < 2) throw InsufficientFramesError("diversity needs at least 2 embeddings");
  const std::size_t all = n * (n - 1) / 2;
  bool exhaustive = pairs == 0 ? n <= kDiversityAllPairsLimit : pairs >= all;
  if (pairs == 0 && !exhaustive) pairs = kDiversityDefaultPairs;
  double sum = 0.0;
  if (exhaustive) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) sum += distance(emb.vectors.row(i), emb.vectors.row(j));
    return sum / static_cast<double>(all);
  }
  std::vector<std::size_t> order(n);
  std::size_t taken = 0;
  while (taken < pairs) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t i = 0; i + 1 < n && taken < pairs; i += 2, ++taken) {
      sum += distance(emb.vectors.row(order[i]), emb.vectors.row(order[i + 1]));
    }
  }
  return sum / static_cast<double>(pairs);
}

JointFrames joints_from_features(const Tensor2& frames, const FeatureLayout& layout) {
  const Tensor2 p = feature_joint_positions(frames, layout);
  JointFrames out(p.rows(), std::vector<Vec3>(layout.joints));
  for (std::size_t t = 0; t < p.rows(); ++t)
    for (std::size_t j = 0; j < layout.joints; ++j) out[t][j] = Vec3(p(t, 3 * j), p(t, 3 * j + 1), p(t, 3 * j + 2));
  return out;
}

double peak_jerk(const JointFrames& joints, double fps) {
  if (joints.size() < 4) throw InsufficientFramesError("peak_jerk needs at least 4 frames");
  if (!(fps > 0.0)) throw ConfigError("peak_jerk: fps must be positive");
  const double s = fps * fps * fps;
  double peak = 0.0;
  for (std::size_t t = 0; t + 3 < joints.size(); ++t) {
    if (joints[t].size() != joints[t + 3].size()) throw DimensionError("peak_jerk: joint count changes");
    for (std::size_t j = 0; j < joints[t].size(); ++j) {
      const Vec3 d3 = joints[t + 3][j] - 3.0 * joints[t + 2][j] + 3.0 * joints[t + 1][j] - joints[t][j];
      peak = std::max(peak, d3.norm() * s);
    }
  }
  return peak;
}

namespace {

bool near_any(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double radius) {
  for (const Vec3& p : a)
    for (const Vec3& q : b)
      if ((p - q).norm() < radius) return true;
  return false;
}

}  // namespace

std::vector<bool> contact_labels(const JointFrames& ego, const JointFrames& partner, double radius) {
  if (ego.size() != partner.size()) throw DimensionError("contact labels: ego and partner lengths differ");
  std::vector<bool> out(ego.size());
  for (std::size_t t = 0; t < ego.size(); ++t) out[t] = near_any(ego[t], partner[t], radius);
  return out;
}

CollisionReport collision_metrics(const JointFrames& ego, const VoxelGrid* grid, const JointFrames* partner,
                                  const CollisionOptions& opts, const std::vector<bool>* reference_contacts) {
  if (!grid && !partner) throw ConfigError("collision metrics need a scene grid or a partner");
  if (!(opts.collision_radius > 0.0) || !(opts.contact_radius > 0.0)) {
    throw ConfigError("collision metrics: radii must be positive");
  }
  if (partner && partner->size() != ego.size()) throw DimensionError("collision metrics: partner length differs");
  CollisionReport rep;
  rep.collided.assign(ego.size(), false);
  for (std::size_t t = 0; t < ego.size(); ++t) {
    bool hit = false;
    if (grid) {
      for (const Vec3& p : ego[t]) {
        if (query_occupancy(*grid, p) == Occupancy::kOccupied) {
          hit = true;
          break;
        }
      }
    }
    if (!hit && partner) hit = near_any(ego[t], (*partner)[t], opts.collision_radius);
    rep.collided[t] = hit;
  }
  if (!ego.empty()) {
    const auto n = std::count(rep.collided.begin(), rep.collided.end(), true);
    rep.collision_pct = 100.0 * static_cast<double>(n) / static_cast<double>(ego.size());
  }
  if (partner) {
    rep.contacts = contact_labels(ego, *partner, opts.contact_radius);
    if (reference_contacts) {
      if (reference_contacts->size() != ego.size()) throw DimensionError("collision metrics: reference length");
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t t = 0; t < ego.size(); ++t) {
        const bool p = rep.contacts[t], r = (*reference_contacts)[t];
        tp += p && r;
        fp += p && !r;
        fn += !p && r;
      }
      rep.contact_precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
      rep.contact_recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
  }
  return rep;
}

RandomProjectionEmbedder::RandomProjectionEmbedder(std::size_t feature_dim, std::size_t window, std::size_t dim,
                                                   std::uint64_t seed)
    : feature_dim_(feature_dim), window_(window), dim_(dim), projection_(window * feature_dim, dim) {
  if (feature_dim == 0 || window == 0 || dim == 0) throw ConfigError("embedder sizes must be positive");
  Rng rng(seed, 0x656d62);
  const double scale = 1.0 / std::sqrt(static_cast<double>(window * feature_dim));
  for (double& v : projection_.data()) v = rng.normal() * scale;
}

std::vector<double> RandomProjectionEmbedder::embed(const Tensor2& frames) const {
  if (frames.rows() != window_ || frames.cols() != feature_dim_) {
    throw DimensionError("embedder expects a " + std::to_string(window_) + "×" + std::to_string(feature_dim_) +
                         " window");
  }
  std::vector<double> out(dim_, 0.0);
  const auto flat = frames.data();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double x = flat[i];
    if (x == 0.0) continue;
    const auto row = projection_.row(i);
    for (std::size_t k = 0; k < dim_; ++k) out[k] += x * row[k];
  }
  double norm = 0.0;
  for (double v : out) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& v : out) v /= norm;
  return out;
}

EmbeddingSet embed_motion(const MotionEmbedder& embedder, const Tensor2& frames, std::string source) {
  const std::size_t w = embedder.window();
  const std::size_t n = frames.rows() / w;
  EmbeddingSet set{Tensor2d(n, embedder.dim()), std::move(source)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = embedder.embed(slice_rows(frames, i * w, (i + 1) * w));
    std::copy(e.begin(), e.end(), set.vectors.row(i).begin());
  }
  return set;
}

std::vector<std::string> top_level_components() {
  return {prof::kContext, prof::kDenoise, prof::kDecode, prof::kSensitivity, prof::kFwsr, prof::kPrePost};
}

double LatencyBreakdown::component_per_frame(const std::string& name) const {
  if (frames == 0) return 0.0;
  auto it = seconds.find(name);
  return it == seconds.end() ? 0.0 : it->second / static_cast<double>(frames);
}

double LatencyBreakdown::top_level_seconds() const {
  double s = 0.0;
  for (const auto& c : top_level_components()) {
    auto it = seconds.find(c);
    if (it != seconds.end()) s += it->second;
  }
  return s;
}

LatencyBreakdown latency_profile(const std::function<std::size_t()>& step, std::size_t n_frames) {
  LatencyBreakdown out;
  if (n_frames == 0) return out;
  prof::Profiler profiler;
  prof::Install guard(profiler);
  const auto start = std::chrono::steady_clock::now();
  while (out.frames < n_frames) {
    const std::size_t produced = step();
    if (produced == 0) throw ConfigError("latency profile: step produced no frames");
    out.frames += produced;
  }
  out.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.seconds = profiler.all_seconds();
  out.counts = profiler.all_counts();
  return out;
}

}  // namespace remogen
