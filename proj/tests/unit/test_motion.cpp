#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "remogen/motion.hpp"

using namespace remogen;

namespace {

RawPoseSequence walk(std::size_t frames, double yaw_rate = 0.3) {
  SyntheticMotionSpec spec;
  spec.frames = frames;
  spec.yaw_rate = yaw_rate;
  return synthetic_sequence(spec);
}

double seq_diff(const RawPoseSequence& a, const RawPoseSequence& b) {
  double d = 0.0;
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    const auto& fa = a.frames[t];
    const auto& fb = b.frames[t];
    d = std::max(d, (fa.root_translation - fb.root_translation).cwiseAbs().maxCoeff());
    d = std::max(d, (fa.root_orientation - fb.root_orientation).cwiseAbs().maxCoeff());
    for (std::size_t j = 0; j < fa.joint_positions.size(); ++j) {
      d = std::max(d, (fa.joint_positions[j] - fb.joint_positions[j]).cwiseAbs().maxCoeff());
      d = std::max(d, (fa.joint_rotations[j] - fb.joint_rotations[j]).cwiseAbs().maxCoeff());
    }
  }
  return d;
}

Tensor2 rows_of(std::size_t n, std::size_t d, float base) {
  Tensor2 t(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) t(r, c) = base + static_cast<float>(r);
  return t;
}

}  // namespace

TEST_SUITE("motion") {
  TEST_CASE("layout spans tile the feature vector") {
    FeatureLayout l;
    CHECK(l.dim() == 276);
    CHECK(l.root_translation().offset == 0);
    CHECK(l.rotations_6d().offset == l.root_translation().end());
    CHECK(l.root_delta_translation().offset == l.rotations_6d().end());
    CHECK(l.root_delta_rotation_6d().offset == l.root_delta_translation().end());
    CHECK(l.joint_positions().offset == l.root_delta_rotation_6d().end());
    CHECK(l.joint_velocities().offset == l.joint_positions().end());
    FeatureLayout extra{22, true};
    CHECK(extra.dim() == 282);
    CHECK(FeatureLayout::from_id(extra.id()) == extra);
    CHECK(FeatureLayout::from_id(l.id()) == l);
    FeatureLayout small{5, false};
    CHECK(small.dim() == 3 + 30 + 3 + 6 + 15 + 15);
  }

  TEST_CASE("canonical transform of a canonical pose is the identity") {
    const RawPoseSequence seq = walk(3, 0.0);
    const RigidTransform t0 = canonical_transform(seq.frames[0]);
    const RawPoseSequence canon = transform_sequence(seq, t0);
    const RigidTransform t1 = canonical_transform(canon.frames[0]);
    CHECK((t1.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(t1.translation.cwiseAbs().maxCoeff() < 1e-6);
    const auto& f = canon.frames[0];
    CHECK(std::abs(f.joint_positions[0].x()) < 1e-6);
    CHECK(std::abs(f.joint_positions[0].y()) < 1e-6);
    CHECK(std::abs(f.joint_positions[0].z() - seq.frames[0].joint_positions[0].z()) < 1e-9);
    const Vec3 hip = f.joint_positions[2] - f.joint_positions[1];
    CHECK(hip.x() > 0.0);
    CHECK(std::abs(hip.y()) < 1e-6);
  }

  TEST_CASE("canonical transform inverts a known rigid motion") {
    const RawPoseSequence base = transform_sequence(walk(4), canonical_transform(walk(4).frames[0]));
    for (double yaw : {0.3, -2.0, 3.0}) {
      const RigidTransform g = RigidTransform::from_yaw(yaw, Vec3(1.5, -2.0, 0.0));
      const RawPoseSequence moved = transform_sequence(base, g);
      const RigidTransform c = canonical_transform(moved.frames[0]);
      CHECK((c.compose(g).rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(c.compose(g).translation.cwiseAbs().maxCoeff() < 1e-6);
      CHECK(seq_diff(transform_sequence(transform_sequence(moved, c), c, true), moved) < 1e-6);
    }
  }

  TEST_CASE("stacked hips are degenerate") {
    RawPoseFrame f = walk(1).frames[0];
    f.joint_positions[2] = f.joint_positions[1] + Vec3(0, 0, 0.2);
    CHECK_THROWS_AS(canonical_transform(f), DegeneracyError);
  }

  TEST_CASE("transform_sequence identity translation and round trip") {
    const RawPoseSequence s = walk(6);
    CHECK(seq_diff(transform_sequence(s, RigidTransform::identity()), s) == 0.0);
    RigidTransform tr;
    tr.translation = Vec3(1.0, 2.0, 3.0);
    const RawPoseSequence shifted = transform_sequence(s, tr);
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
      CHECK((shifted.frames[t].root_translation - s.frames[t].root_translation - tr.translation).norm() < 1e-12);
      CHECK((shifted.frames[t].root_orientation - s.frames[t].root_orientation).norm() == 0.0);
    }
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const RigidTransform g = RigidTransform::from_yaw(rng.uniform(-3, 3), Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-1, 1)));
      CHECK(seq_diff(transform_sequence(transform_sequence(s, g), g, true), s) < 1e-6);
    }
  }

  TEST_CASE("featurize static pose has zero deltas") {
    RawPoseSequence s = walk(1);
    for (int i = 0; i < 4; ++i) s.frames.push_back(s.frames[0]);
    const FeatureLayout l;
    const MotionSegment m = featurize(s, l);
    REQUIRE(m.length() == 5);
    for (std::size_t t = 0; t < 5; ++t) {
      for (auto span : {l.root_delta_translation(), l.joint_velocities()})
        for (std::size_t c = span.offset; c < span.end(); ++c) REQUIRE(m.frames(t, c) == 0.0f);
    }
  }

  TEST_CASE("featurize constant root velocity and identity rotations") {
    RawPoseFrame f;
    f.joint_rotations.assign(22, Mat3::Identity());
    f.joint_positions.assign(22, Vec3::Zero());
    for (std::size_t j = 0; j < 22; ++j) f.joint_positions[j] = Vec3(0.01 * j, 0.02 * j, 0.5);
    RawPoseSequence s;
    for (int t = 0; t < 4; ++t) {
      RawPoseFrame g = f;
      g.root_translation = Vec3(0.1 * t, 0, 0);
      for (auto& p : g.joint_positions) p += g.root_translation;
      s.frames.push_back(g);
    }
    const FeatureLayout l;
    const MotionSegment m = featurize(s, l);
    for (std::size_t t = 1; t < 4; ++t) {
      const auto d = l.root_delta_translation().offset;
      CHECK(m.frames(t, d) == doctest::Approx(0.1).epsilon(1e-6));
      CHECK(m.frames(t, d + 1) == 0.0f);
      CHECK(m.frames(t, d + 2) == 0.0f);
    }
    const auto r = l.rotations_6d().offset;
    const float six[6] = {1, 0, 0, 0, 1, 0};
    for (std::size_t b = 0; b < 22; ++b)
      for (std::size_t k = 0; k < 6; ++k) CHECK(m.frames(0, r + 6 * b + k) == six[k]);
    // telescoped deltas give the total displacement
    double sum = 0.0;
    for (std::size_t t = 0; t < 4; ++t) sum += m.frames(t, l.root_delta_translation().offset);
    CHECK(std::abs(sum - 0.3) < 1e-6);
    CHECK_THROWS_AS(featurize(s, FeatureLayout{21, false}), DimensionError);
  }

  TEST_CASE("6d rotation blocks are orthonormal") {
    const FeatureLayout l;
    const MotionSegment m = featurize(walk(10), l);
    for (std::size_t t = 0; t < m.length(); ++t)
      for (std::size_t b = 0; b < l.rotation_blocks(); ++b) {
        const auto six = m.frames.row(t).subspan(l.rotations_6d().offset + 6 * b, 6);
        const Vec3 c0(six[0], six[1], six[2]), c1(six[3], six[4], six[5]);
        REQUIRE(std::abs(c0.norm() - 1.0) < 1e-5);
        REQUIRE(std::abs(c1.norm() - 1.0) < 1e-5);
        REQUIRE(std::abs(c0.dot(c1)) < 1e-5);
      }
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
      const Mat3 r = RigidTransform::from_yaw(rng.uniform(-3, 3), Vec3::Zero()).rotation;
      const auto six = rotation_to_6d(r);
      CHECK((rotation_from_6d(six) - r).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  TEST_CASE("update_history keeps the last H rows") {
    const HistoryWindow h(rows_of(2, 3, 100.0f));
    const Tensor2 f = rows_of(8, 3, 0.0f);
    const HistoryWindow out = update_history(h, f);
    CHECK(out.length() == 2);
    CHECK(bit_equal(out.frames(), slice_rows(f, 6, 8)));
    CHECK(bit_equal(update_history(h, Tensor2(0, 3)).frames(), h.frames()));
    const HistoryWindow h3(rows_of(3, 3, 100.0f));
    const HistoryWindow o3 = update_history(h3, rows_of(1, 3, 7.0f));
    CHECK(o3.frames()(0, 0) == 101.0f);
    CHECK(o3.frames()(1, 0) == 102.0f);
    CHECK(o3.frames()(2, 0) == 7.0f);
    CHECK_THROWS_AS(update_history(h, rows_of(2, 4, 0.0f)), DimensionError);
  }

  TEST_CASE("normalizer fit and round trip") {
    const Tensor2 f = Tensor2::from_rows({{1.0f, 5.0f}, {3.0f, 5.0f}});
    const Normalizer n = fit_normalizer(f);
    CHECK(n.mean(0, 0) == 2.0f);
    CHECK(n.std(0, 0) == 1.0f);
    CHECK(n.std(0, 1) == doctest::Approx(1e-6));
    const Tensor2 z = normalize(f, n);
    CHECK(z(0, 0) == -1.0f);
    CHECK(z(1, 0) == 1.0f);
    CHECK(z(0, 1) == 0.0f);
    Rng rng(1);
    const Tensor2 r = testing_support::rand_t(20, 6, rng, -3, 3);
    const Normalizer nr = fit_normalizer(r);
    CHECK(max_abs_diff(normalize(normalize(r, nr), nr, true), r) < 1e-6);
    CHECK_THROWS_AS(fit_normalizer(Tensor2(0, 2)), EmptyInputError);
  }
}
