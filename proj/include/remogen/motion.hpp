#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "remogen/rng.hpp"
#include "remogen/tensor.hpp"

namespace remogen {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Per-frame feature layout. Spans are laid out in declaration order:
// root translation, 6D rotations, root delta translation, root delta rotation,
// joint positions, joint velocities.
struct FeatureLayout {
  struct Span {
    std::size_t offset;
    std::size_t length;
    std::size_t end() const { return offset + length; }
  };

  std::size_t joints = 22;
  // When set, the root orientation gets its own rotation block in addition to
  // the `joints` body blocks.
  bool root_extra = false;

  std::size_t rotation_blocks() const { return joints + (root_extra ? 1 : 0); }
  Span root_translation() const { return {0, 3}; }
  Span rotations_6d() const { return {3, 6 * rotation_blocks()}; }
  Span root_delta_translation() const { return {rotations_6d().end(), 3}; }
  Span root_delta_rotation_6d() const { return {root_delta_translation().end(), 6}; }
  Span joint_positions() const { return {root_delta_rotation_6d().end(), 3 * joints}; }
  Span joint_velocities() const { return {joint_positions().end(), 3 * joints}; }
  std::size_t dim() const { return joint_velocities().end(); }

  std::string id() const;
  static FeatureLayout from_id(std::string_view id);
  bool operator==(const FeatureLayout&) const = default;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_yaw(double yaw, const Vec3& translation);
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  // (this ∘ other)(p) = this(other(p))
  RigidTransform compose(const RigidTransform& other) const;
  void validate() const;
};

struct RawPoseFrame {
  Vec3 root_translation = Vec3::Zero();
  Mat3 root_orientation = Mat3::Identity();
  // Local (parent-relative) rotations; entry 0 is the pelvis rotation relative
  // to the root orientation.
  std::vector<Mat3> joint_rotations;
  // World positions.
  std::vector<Vec3> joint_positions;
};

struct RawPoseSequence {
  std::vector<RawPoseFrame> frames;
  double fps = 10.0;

  std::size_t joints() const { return frames.empty() ? 0 : frames.front().joint_positions.size(); }
  void validate() const;
};

struct MotionSegment {
  Tensor2 frames;  // T×D
  double fps = 10.0;

  std::size_t length() const { return frames.rows(); }
};

// Exactly H rows of feature frames.
class HistoryWindow {
 public:
  HistoryWindow() = default;
  explicit HistoryWindow(Tensor2 frames);

  const Tensor2& frames() const { return frames_; }
  std::size_t length() const { return frames_.rows(); }
  std::size_t dim() const { return frames_.cols(); }

 private:
  Tensor2 frames_;
};

struct Normalizer {
  Tensor2 mean;  // 1×D
  Tensor2 std;   // 1×D, entries >= kStdFloor

  static constexpr double kStdFloor = 1e-6;
  static Normalizer identity(std::size_t dim);
  std::size_t dim() const { return mean.cols(); }
};

// Transform that maps world coordinates into the ego canonical frame defined by
// the first frame: pelvis XY at the origin and the left->right hip axis on +X.
// Height is preserved.
RigidTransform canonical_transform(const RawPoseFrame& first_frame, std::size_t pelvis_index = 0,
                                   std::size_t left_hip_index = 1, std::size_t right_hip_index = 2);

RawPoseSequence transform_sequence(const RawPoseSequence& seq, const RigidTransform& transform,
                                   bool inverse = false);

MotionSegment featurize(const RawPoseSequence& seq, const FeatureLayout& layout);

// Last H rows of concat(history, segment).
HistoryWindow update_history(const HistoryWindow& history, const Tensor2& new_frames);
inline HistoryWindow update_history(const HistoryWindow& history, const MotionSegment& segment) {
  return update_history(history, segment.frames);
}

Normalizer fit_normalizer(const Tensor2& frames);
Tensor2 normalize(const Tensor2& frames, const Normalizer& n, bool inverse = false);

std::array<float, 6> rotation_to_6d(const Mat3& r);
Mat3 rotation_from_6d(std::span<const float> six);

// Accessors on a single D-dim feature row.
Vec3 feature_root_translation(std::span<const float> frame, const FeatureLayout& layout);
Mat3 feature_root_rotation(std::span<const float> frame, const FeatureLayout& layout);
double feature_root_yaw(std::span<const float> frame, const FeatureLayout& layout);
// T×J×3 joint positions flattened as rows of 3J.
Tensor2 feature_joint_positions(const Tensor2& frames, const FeatureLayout& layout);

// Kinematic tree used by the synthetic generator (SMPL body ordering).
const std::vector<int>& smpl_parents();

struct SyntheticMotionSpec {
  std::size_t joints = 22;
  std::size_t frames = 40;
  double fps = 10.0;
  double speed = 1.0;      // m/s
  double yaw_rate = 0.0;   // rad/s
  double swing = 0.4;      // rad, hip swing amplitude
  double cadence = 0.9;    // gait cycles per second
  double start_yaw = 0.0;
  Vec3 start = Vec3(0.0, 0.0, 0.93);
};

SyntheticMotionSpec random_motion_spec(Rng& rng, std::size_t joints = 22, std::size_t frames = 40);
RawPoseSequence synthetic_sequence(const SyntheticMotionSpec& spec);

// H copies of the static rest pose, featurized in the canonical frame.
HistoryWindow rest_history(const FeatureLayout& layout, std::size_t history_length);

}  // namespace remogen
