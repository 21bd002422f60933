#include "remogen/motion.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

namespace remogen {

namespace {

constexpr std::array<float, 6> kIdentity6d{1, 0, 0, 0, 1, 0};

void write_span(std::span<float> row, FeatureLayout::Span s, std::size_t at, std::span<const float> v) {
  for (std::size_t i = 0; i < v.size(); ++i) row[s.offset + at + i] = v[i];
}

void write_vec(std::span<float> row, std::size_t offset, const Vec3& v) {
  for (int i = 0; i < 3; ++i) row[offset + i] = static_cast<float>(v[i]);
}

Mat3 yaw_matrix(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

bool orthonormal(const Mat3& r, double tol) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace

std::string FeatureLayout::id() const {
  return "smplx-j" + std::to_string(joints) + (root_extra ? "-rootextra" : "-rootin");
}

FeatureLayout FeatureLayout::from_id(std::string_view id) {
  constexpr std::string_view prefix = "smplx-j";
  if (id.substr(0, prefix.size()) != prefix) throw FormatError("unknown layout id: " + std::string(id));
  const auto dash = id.find('-', prefix.size());
  if (dash == std::string_view::npos) throw FormatError("unknown layout id: " + std::string(id));
  FeatureLayout layout;
  try {
    layout.joints = std::stoul(std::string(id.substr(prefix.size(), dash - prefix.size())));
  } catch (const std::exception&) {
    throw FormatError("unknown layout id: " + std::string(id));
  }
  const std::string_view variant = id.substr(dash + 1);
  if (variant == "rootextra") {
    layout.root_extra = true;
  } else if (variant != "rootin") {
    throw FormatError("unknown layout variant: " + std::string(variant));
  }
  if (layout.joints == 0) throw FormatError("layout with zero joints");
  return layout;
}

RigidTransform RigidTransform::from_yaw(double yaw, const Vec3& translation) {
  return {yaw_matrix(yaw), translation};
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

void RigidTransform::validate() const {
  if (!orthonormal(rotation, 1e-6)) throw NumericError("rigid transform rotation is not a proper rotation");
  if (!translation.allFinite()) throw NumericError("rigid transform translation is not finite");
}

void RawPoseSequence::validate() const {
  if (frames.empty()) return;
  const std::size_t j = frames.front().joint_positions.size();
  for (const auto& f : frames) {
    if (f.joint_positions.size() != j || f.joint_rotations.size() != j) {
      throw DimensionError("pose sequence: inconsistent joint counts");
    }
    if (!orthonormal(f.root_orientation, 1e-5)) throw NumericError("pose sequence: root orientation not orthonormal");
    for (const auto& r : f.joint_rotations) {
      if (!orthonormal(r, 1e-5)) throw NumericError("pose sequence: joint rotation not orthonormal");
    }
  }
}

HistoryWindow::HistoryWindow(Tensor2 frames) : frames_(std::move(frames)) {
  if (frames_.rows() == 0) throw DimensionError("history window needs at least one frame");
}

Normalizer Normalizer::identity(std::size_t dim) { return {Tensor2(1, dim, 0.0f), Tensor2(1, dim, 1.0f)}; }

RigidTransform canonical_transform(const RawPoseFrame& first_frame, std::size_t pelvis_index,
                                   std::size_t left_hip_index, std::size_t right_hip_index) {
  const auto& pos = first_frame.joint_positions;
  if (std::max({pelvis_index, left_hip_index, right_hip_index}) >= pos.size()) {
    throw DimensionError("canonical_transform: joint index out of range");
  }
  Vec3 axis = pos[right_hip_index] - pos[left_hip_index];
  axis.z() = 0.0;
  if (axis.norm() <= 1e-6) throw DegeneracyError("canonical_transform: hips overlap in the ground plane");
  const double yaw = std::atan2(axis.y(), axis.x());
  const Mat3 r = yaw_matrix(-yaw);
  const Vec3 p0(pos[pelvis_index].x(), pos[pelvis_index].y(), 0.0);
  return {r, -(r * p0)};
}

RawPoseSequence transform_sequence(const RawPoseSequence& seq, const RigidTransform& transform, bool inverse) {
  transform.validate();
  const RigidTransform t = inverse ? transform.inverse() : transform;
  RawPoseSequence out = seq;
  for (auto& f : out.frames) {
    f.root_translation = t.apply(f.root_translation);
    f.root_orientation = t.rotation * f.root_orientation;
    for (auto& p : f.joint_positions) p = t.apply(p);
  }
  return out;
}

std::array<float, 6> rotation_to_6d(const Mat3& r) {
  return {static_cast<float>(r(0, 0)), static_cast<float>(r(1, 0)), static_cast<float>(r(2, 0)),
          static_cast<float>(r(0, 1)), static_cast<float>(r(1, 1)), static_cast<float>(r(2, 1))};
}

Mat3 rotation_from_6d(std::span<const float> six) {
  if (six.size() != 6) throw DimensionError("rotation_from_6d: need 6 values");
  const Vec3 a(six[0], six[1], six[2]);
  const Vec3 b(six[3], six[4], six[5]);
  if (a.norm() < 1e-12) throw DegeneracyError("rotation_from_6d: zero first column");
  const Vec3 c0 = a.normalized();
  Vec3 c1 = b - c0.dot(b) * c0;
  if (c1.norm() < 1e-12) throw DegeneracyError("rotation_from_6d: parallel columns");
  c1.normalize();
  Mat3 r;
  r.col(0) = c0;
  r.col(1) = c1;
  r.col(2) = c0.cross(c1);
  return r;
}

MotionSegment featurize(const RawPoseSequence& seq, const FeatureLayout& layout) {
  if (seq.frames.empty()) throw EmptyInputError("featurize: empty sequence");
  if (seq.joints() != layout.joints) {
    throw DimensionError("featurize: sequence has " + std::to_string(seq.joints()) + " joints, layout " +
                         std::to_string(layout.joints));
  }
  seq.validate();
  const std::size_t n = seq.frames.size(), J = layout.joints;
  MotionSegment out{Tensor2(n, layout.dim()), seq.fps};
  for (std::size_t t = 0; t < n; ++t) {
    const RawPoseFrame& f = seq.frames[t];
    auto row = out.frames.row(t);
    write_vec(row, layout.root_translation().offset, f.root_translation);

    const auto rot = layout.rotations_6d();
    std::size_t block = 0;
    if (layout.root_extra) {
      write_span(row, rot, 0, rotation_to_6d(f.root_orientation));
      block = 1;
      for (std::size_t j = 0; j < J; ++j) write_span(row, rot, 6 * (block + j), rotation_to_6d(f.joint_rotations[j]));
    } else {
      write_span(row, rot, 0, rotation_to_6d(f.root_orientation * f.joint_rotations[0]));
      for (std::size_t j = 1; j < J; ++j) write_span(row, rot, 6 * j, rotation_to_6d(f.joint_rotations[j]));
    }

    for (std::size_t j = 0; j < J; ++j) write_vec(row, layout.joint_positions().offset + 3 * j, f.joint_positions[j]);

    if (t == 0) continue;  // deltas and velocities stay zero on the first frame
    const RawPoseFrame& prev = seq.frames[t - 1];
    write_vec(row, layout.root_delta_translation().offset, f.root_translation - prev.root_translation);
    const auto d6 = rotation_to_6d(prev.root_orientation.transpose() * f.root_orientation);
    for (std::size_t i = 0; i < 6; ++i) row[layout.root_delta_rotation_6d().offset + i] = d6[i] - kIdentity6d[i];
    for (std::size_t j = 0; j < J; ++j) {
      write_vec(row, layout.joint_velocities().offset + 3 * j, f.joint_positions[j] - prev.joint_positions[j]);
    }
  }
  return out;
}

HistoryWindow update_history(const HistoryWindow& history, const Tensor2& new_frames) {
  if (new_frames.rows() == 0) return history;
  if (new_frames.cols() != history.dim()) {
    throw DimensionError("update_history: feature width " + std::to_string(new_frames.cols()) +
                         " != history width " + std::to_string(history.dim()));
  }
  const std::size_t h = history.length();
  const Tensor2 joined = concat_rows(history.frames(), new_frames);
  return HistoryWindow(slice_rows(joined, joined.rows() - h, joined.rows()));
}

Normalizer fit_normalizer(const Tensor2& frames) {
  if (frames.rows() < 2) throw EmptyInputError("fit_normalizer: need at least two frames");
  const std::size_t d = frames.cols();
  const double n = static_cast<double>(frames.rows());
  Normalizer out{Tensor2(1, d), Tensor2(1, d)};
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < frames.rows(); ++r) mean += frames(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < frames.rows(); ++r) var += (frames(r, c) - mean) * (frames(r, c) - mean);
    var /= n;
    out.mean(0, c) = static_cast<float>(mean);
    out.std(0, c) = static_cast<float>(std::max(std::sqrt(var), Normalizer::kStdFloor));
  }
  return out;
}

Tensor2 normalize(const Tensor2& frames, const Normalizer& n, bool inverse) {
  if (frames.cols() != n.dim()) throw DimensionError("normalize: feature width mismatch");
  Tensor2 out(frames.rows(), frames.cols());
  for (std::size_t r = 0; r < frames.rows(); ++r) {
    for (std::size_t c = 0; c < frames.cols(); ++c) {
      const double m = n.mean(0, c), s = n.std(0, c), v = frames(r, c);
      out(r, c) = static_cast<float>(inverse ? v * s + m : (v - m) / s);
    }
  }
  return out;
}

Vec3 feature_root_translation(std::span<const float> frame, const FeatureLayout& layout) {
  const auto o = layout.root_translation().offset;
  return {frame[o], frame[o + 1], frame[o + 2]};
}

Mat3 feature_root_rotation(std::span<const float> frame, const FeatureLayout& layout) {
  return rotation_from_6d(frame.subspan(layout.rotations_6d().offset, 6));
}

double feature_root_yaw(std::span<const float> frame, const FeatureLayout& layout) {
  const Mat3 r = feature_root_rotation(frame, layout);
  return std::atan2(r(1, 0), r(0, 0));
}

Tensor2 feature_joint_positions(const Tensor2& frames, const FeatureLayout& layout) {
  if (frames.cols() != layout.dim()) throw DimensionError("feature_joint_positions: width mismatch");
  const auto s = layout.joint_positions();
  Tensor2 out(frames.rows(), s.length);
  for (std::size_t r = 0; r < frames.rows(); ++r)
    for (std::size_t c = 0; c < s.length; ++c) out(r, c) = frames(r, s.offset + c);
  return out;
}

const std::vector<int>& smpl_parents() {
  static const std::vector<int> parents{-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  return parents;
}

namespace {

// Rest offsets relative to the parent joint; body faces +Y, right side on +X, Z up.
const std::vector<Vec3>& smpl_offsets() {
  static const std::vector<Vec3> offsets{
      {0, 0, 0},          {-0.06, 0, -0.09},  {0.06, 0, -0.09},   {0, 0, 0.11},      {0, 0, -0.38},
      {0, 0, -0.38},      {0, 0, 0.14},       {0, 0, -0.40},      {0, 0, -0.40},     {0, 0, 0.05},
      {0, 0.12, -0.05},   {0, 0.12, -0.05},   {0, 0, 0.22},       {-0.08, 0, 0.15},  {0.08, 0, 0.15},
      {0, 0, 0.09},       {-0.12, 0, 0.03},   {0.12, 0, 0.03},    {-0.26, 0, 0},     {0.26, 0, 0},
      {-0.25, 0, 0},      {0.25, 0, 0}};
  return offsets;
}

Mat3 about_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 about_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }

}  // namespace

SyntheticMotionSpec random_motion_spec(Rng& rng, std::size_t joints, std::size_t frames) {
  SyntheticMotionSpec s;
  s.joints = joints;
  s.frames = frames;
  s.speed = rng.uniform(0.0, 1.6);
  s.yaw_rate = rng.uniform(-0.6, 0.6);
  s.swing = rng.uniform(0.1, 0.6);
  s.cadence = rng.uniform(0.6, 1.2);
  s.start_yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
  s.start = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.93);
  return s;
}

RawPoseSequence synthetic_sequence(const SyntheticMotionSpec& spec) {
  if (spec.joints < 3 || spec.joints > smpl_parents().size()) {
    throw ConfigError("synthetic_sequence: joints must be in [3, 22]");
  }
  const auto& parents = smpl_parents();
  const auto& offsets = smpl_offsets();
  RawPoseSequence seq;
  seq.fps = spec.fps;
  Vec3 root = spec.start;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double time = static_cast<double>(t) / spec.fps;
    const double yaw = spec.start_yaw + spec.yaw_rate * time;
    const double phase = 2.0 * std::numbers::pi * spec.cadence * time;
    if (t > 0) {
      const double mid_yaw = spec.start_yaw + spec.yaw_rate * (time - 0.5 / spec.fps);
      root += yaw_matrix(mid_yaw) * Vec3(0.0, spec.speed / spec.fps, 0.0);
    }
    RawPoseFrame f;
    f.root_orientation = yaw_matrix(yaw);
    f.root_translation = Vec3(root.x(), root.y(), spec.start.z() + 0.02 * std::sin(2.0 * phase));
    f.joint_rotations.assign(spec.joints, Mat3::Identity());
    auto set = [&](std::size_t j, const Mat3& r) {
      if (j < spec.joints) f.joint_rotations[j] = r;
    };
    const double s = std::sin(phase);
    set(1, about_x(spec.swing * s));
    set(2, about_x(-spec.swing * s));
    set(4, about_x(-0.5 * spec.swing * (1.0 + std::cos(phase))));
    set(5, about_x(-0.5 * spec.swing * (1.0 - std::cos(phase))));
    set(16, about_y(0.2) * about_x(-0.6 * spec.swing * s));
    set(17, about_y(-0.2) * about_x(0.6 * spec.swing * s));
    set(18, about_x(0.3));
    set(19, about_x(0.3));

    std::vector<Mat3> global(spec.joints);
    f.joint_positions.resize(spec.joints);
    for (std::size_t j = 0; j < spec.joints; ++j) {
      if (parents[j] < 0) {
        global[j] = f.root_orientation * f.joint_rotations[j];
        f.joint_positions[j] = f.root_translation;
      } else {
        const auto p = static_cast<std::size_t>(parents[j]);
        global[j] = global[p] * f.joint_rotations[j];
        f.joint_positions[j] = f.joint_positions[p] + global[p] * offsets[j];
      }
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

HistoryWindow rest_history(const FeatureLayout& layout, std::size_t history_length) {
  SyntheticMotionSpec spec;
  spec.joints = layout.joints;
  spec.frames = 1;
  spec.speed = 0.0;
  spec.swing = 0.0;
  spec.start = Vec3(0.0, 0.0, 0.93);
  const RawPoseSequence seq = synthetic_sequence(spec);
  const RawPoseSequence canon = transform_sequence(seq, canonical_transform(seq.frames.front()));
  const Tensor2 one = featurize(canon, layout).frames;
  Tensor2 rows(history_length, one.cols());
  for (std::size_t r = 0; r < history_length; ++r)
    for (std::size_t c = 0; c < one.cols(); ++c) rows(r, c) = one(0, c);
  return HistoryWindow(std::move(rows));
}

}  // namespace remogen
