// SPDX-License-Identifier: Apache-2.0

#include "gsdf/tracking.hpp"
#include "gsdf/fusion.hpp"
#include "gsdf/synthetic.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

namespace gsdf {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

TEST(Huber, CostAndWeight) {
  EXPECT_DOUBLE_EQ(huber_cost(0.01, 0.02), 1e-4);
  EXPECT_DOUBLE_EQ(huber_cost(-0.05, 0.02), 2 * 0.02 * 0.05 - 0.02 * 0.02);
  EXPECT_DOUBLE_EQ(huber_weight(0.01, 0.02), 1.0);
  EXPECT_DOUBLE_EQ(huber_weight(-0.04, 0.02), 0.5);
  // Continuous at the threshold.
  EXPECT_NEAR(huber_cost(0.02 + 1e-12, 0.02), huber_cost(0.02, 0.02), 1e-12);
}

TEST(Icp, PointToPoint) {
  const IcpEstimate e = icp_point_to_point(Vec3(1, 0, 0), Vec3::Zero());
  EXPECT_DOUBLE_EQ(e.distance, 1.0);
  EXPECT_EQ(e.gradient, Vec3(1, 0, 0));
  EXPECT_THROW(icp_point_to_point(Vec3(1, 2, 3), Vec3(1, 2, 3)), std::domain_error);
}

TEST(Icp, PointToPlane) {
  const IcpEstimate e = icp_point_to_plane(Vec3(0, 0, 0.3), Vec3::Zero(), Vec3(0, 0, 1));
  EXPECT_DOUBLE_EQ(e.distance, 0.3);
  EXPECT_EQ(e.gradient, Vec3(0, 0, 1));
}

TEST(Icp, ProjectionInequality) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(n(rng), n(rng), n(rng)), q(n(rng), n(rng), n(rng));
    const Vec3 normal = Vec3(n(rng), n(rng), n(rng)).normalized();
    EXPECT_LE(std::abs(icp_point_to_plane(p, q, normal).distance),
              icp_point_to_point(p, q).distance + 1e-12);
  }
}

GradientSdfVolume plane_volume(double vs, double plane_z) {
  return testing::analytic_volume(
      vs, 5 * vs, -20, 80, [&](const Vec3& p) { return p.z() - plane_z; },
      [](const Vec3&) { return Vec3::UnitZ(); });
}

TEST(Residual, PointOnSurfaceAndJacobianShape) {
  const double vs = 0.02;
  const GradientSdfVolume vol = plane_volume(vs, 1.0);
  const Pose pose = Pose::FromQuaternion(Eigen::Quaterniond::Identity(), Vec3(0.1, 0.2, 0.0));
  const auto r = residual_and_jacobian(vol, Vec3(0.013, -0.027, 1.0), pose);
  ASSERT_TRUE(r.has_value());
  EXPECT_LE(std::abs(r->r), 1e-3 * vs);
  EXPECT_LT((r->jacobian.head<3>() - Vec3(0, 0, 1)).norm(), 1e-7);
  const Vec3 p_w = pose * Vec3(0.013, -0.027, 1.0);
  EXPECT_LT((r->jacobian.tail<3>() - p_w.cross(Vec3(0, 0, 1))).norm(), 1e-7);
  EXPECT_FALSE(residual_and_jacobian(vol, Vec3(0, 0, 5.0), pose).has_value());
}

class TrackingScene : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SceneOptions opt;
    opt.noise_enabled = false;
    scene_ = new SphereScene(make_random_sphere_scene(31, opt));
    scene_->trajectory = testing::orbit_arc(Vec3::Zero(), 1.8, 0.4, 0.0, 0.05, 16);
    intr_ = Intrinsics{}.scaled(2);
    volume_ = new GradientSdfVolume(params_.voxel_size, params_.truncation());
    for (std::size_t i = 0; i < scene_->trajectory.size(); ++i) {
      integrate_frame(*volume_, render_sphere_depth(*scene_, scene_->trajectory[i], intr_, i),
                      scene_->trajectory[i], params_);
    }
  }
  static void TearDownTestSuite() {
    delete volume_;
    delete scene_;
  }
  static TrackingParams stride1() {
    TrackingParams t;
    t.subsample_stride = 1;
    return t;
  }
  static inline SphereScene* scene_ = nullptr;
  static inline GradientSdfVolume* volume_ = nullptr;
  static inline FusionParams params_{};
  static inline Intrinsics intr_{};
};

TEST_F(TrackingScene, JacobianMatchesNumericDerivative) {
  std::mt19937_64 rng(44);
  std::vector<VoxelKey> keys;
  for (const auto& [k, v] : volume_->voxels()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  std::uniform_int_distribution<std::size_t> pick(0, keys.size() - 1);
  std::uniform_real_distribution<double> off(-0.45, 0.45);
  std::normal_distribution<double> perturb(0.0, 0.1);
  int checked = 0;
  const double h = 1e-6;
  while (checked < 100) {
    const VoxelKey key = keys[pick(rng)];
    const Vec3 p_w = volume_->center(key) + params_.voxel_size * Vec3(off(rng), off(rng), off(rng));
    Vec6 xi;
    for (int i = 0; i < 6; ++i) xi[i] = perturb(rng);
    const Pose pose = se3_exp(xi);
    const Vec3 p_cam = pose.to_local(p_w);
    const auto r0 = residual_and_jacobian(*volume_, p_cam, pose);
    if (!r0) continue;
    Vec6 numeric;
    bool same_cell = true;
    for (int i = 0; i < 6 && same_cell; ++i) {
      Vec6 d = Vec6::Zero();
      d[i] = h;
      const Pose plus = se3_exp(d) * pose, minus = se3_exp(-d) * pose;
      same_cell = world_to_key(plus * p_cam, params_.voxel_size) == key &&
                  world_to_key(minus * p_cam, params_.voxel_size) == key;
      if (!same_cell) break;
      numeric[i] = (residual_and_jacobian(*volume_, p_cam, plus)->r -
                    residual_and_jacobian(*volume_, p_cam, minus)->r) / (2 * h);
    }
    if (!same_cell) continue;
    EXPECT_LE((numeric - r0->jacobian).norm(), 1e-4 * r0->jacobian.norm());
    ++checked;
  }
}

// Three disjoint planar discs with independent normals: every residual of a
// single-frame model vanishes to float precision, and the discs constrain all
// six pose parameters.
DepthFrame render_planar_patches(const Pose& pose, const Intrinsics& k) {
  struct Disc {
    Vec3 center, normal;
  };
  const std::vector<Disc> discs = {{Vec3(-0.3, 0.0, 1.2), Vec3(0.6, 0.0, 1.0).normalized()},
                                   {Vec3(0.3, 0.15, 1.0), Vec3(-0.5, 0.3, 1.0).normalized()},
                                   {Vec3(0.05, -0.25, 1.4), Vec3(0.0, -0.7, 1.0).normalized()}};
  DepthFrame out(k);
  for (const Disc& disc : discs) {
    const DepthFrame d = testing::render_plane_depth(disc.normal, disc.normal.dot(disc.center), pose, k);
    for (int v = 0; v < k.height; ++v)
      for (int u = 0; u < k.width; ++u) {
        if (!d.valid(u, v)) continue;
        const Vec3 p = pose * backproject(k, Vec2(u, v), d.values(u, v));
        if ((p - disc.center).norm() > 0.12) continue;
        float& z = out.values(u, v);
        if (!(z > 0.0f) || d.values(u, v) < z) z = d.values(u, v);
      }
  }
  return out;
}

TEST(TrackingFixedPoint, ModelFusedFromTheFrameItself) {
  const Intrinsics k;
  const Pose pose = Pose::FromQuaternion(
      Eigen::Quaterniond(Eigen::AngleAxisd(3.0 * kDeg, Vec3(0.2, 1.0, -0.3).normalized())),
      Vec3(0.013, -0.021, 0.007));
  const DepthFrame depth = render_planar_patches(pose, k);
  FusionParams p;
  GradientSdfVolume single(p.voxel_size, p.truncation());
  integrate_frame(single, depth, pose, p);
  TrackingParams tp;
  tp.subsample_stride = 1;
  const TrackResult r = track_frame(single, depth, pose, tp);
  EXPECT_GT(r.residual_count, 3000u);
  EXPECT_LT(r.first_update_norm, 1e-6) << r.first_update_norm;
  EXPECT_LT(se3_log(r.pose * pose.inverse()).norm(), 1e-5);
}

TEST_F(TrackingScene, CurvedModelStaysNearFusingPose) {
  // On curved surfaces the first-order model is off by the curvature term, so
  // the fusing pose is only approximately stationary.
  const Pose& pose = scene_->trajectory[0];
  const DepthFrame depth = render_sphere_depth(*scene_, pose, intr_, 0);
  FusionParams p;
  GradientSdfVolume single(p.voxel_size, p.truncation());
  integrate_frame(single, depth, pose, p);
  const TrackResult r = track_frame(single, depth, pose, stride1());
  EXPECT_LT(se3_log(r.pose * pose.inverse()).norm(), 1e-3);
}

TEST_F(TrackingScene, RecoversPerturbedPose) {
  const std::size_t frame = 7;
  const Pose& truth = scene_->trajectory[frame];
  const DepthFrame depth = render_sphere_depth(*scene_, truth, intr_, frame);
  const Vec3 axis = Vec3(0.3, -0.5, 0.8).normalized();
  Pose init = truth;
  init.rotation = Eigen::AngleAxisd(2.0 * kDeg, axis).toRotationMatrix() * truth.rotation;
  init.translation += 0.01 * Vec3(0.6, 0.0, -0.8);
  const TrackResult r = track_frame(*volume_, depth, init, stride1());
  EXPECT_LE((r.pose.translation - truth.translation).norm(), 0.1 * params_.voxel_size);
  EXPECT_LE(rotation_angle(r.pose.rotation * truth.rotation.transpose()) / kDeg, 0.2);
  EXPECT_LE(r.inlier_count, r.residual_count);
  for (std::size_t i = 1; i < r.cost_history.size(); ++i) {
    EXPECT_LE(r.cost_history[i], r.cost_history[i - 1]);
  }
}

TEST_F(TrackingScene, RigidInvariance) {
  // A grid-preserving transform: quarter turn about z and a whole-voxel shift.
  Pose G;
  G.rotation = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
  G.rotation = G.rotation.array().round().matrix();
  G.translation = params_.voxel_size * Vec3(7, -3, 2);
  SphereScene moved = *scene_;
  for (Sphere& s : moved.spheres) s.center = G * s.center;
  GradientSdfVolume vol_g(params_.voxel_size, params_.truncation());
  GradientSdfVolume vol(params_.voxel_size, params_.truncation());
  for (std::size_t i = 0; i < 4; ++i) {
    const Pose& pose = scene_->trajectory[i];
    const DepthFrame depth = render_sphere_depth(*scene_, pose, intr_, i);
    integrate_frame(vol, depth, pose, params_);
    integrate_frame(vol_g, depth, G * pose, params_);
  }
  const DepthFrame depth = render_sphere_depth(*scene_, scene_->trajectory[5], intr_, 5);
  Pose init = scene_->trajectory[5];
  init.translation += Vec3(0.004, -0.003, 0.002);
  const TrackResult a = track_frame(vol, depth, init, stride1());
  const TrackResult b = track_frame(vol_g, depth, G * init, stride1());
  const Pose expected = G * a.pose;
  EXPECT_LT((b.pose.translation - expected.translation).norm(), 1e-6);
  EXPECT_LT(rotation_angle(b.pose.rotation * expected.rotation.transpose()), 1e-6);
}

TEST(Tracking, EmptyVolumeHasInsufficientOverlap) {
  GradientSdfVolume vol(0.02, 0.1);
  const Intrinsics k = testing::small_intrinsics();
  const DepthFrame depth = testing::render_plane_depth(Vec3::UnitZ(), 1.0, Pose::Identity(), k);
  try {
    track_frame(vol, depth, Pose::Identity(), TrackingParams{});
    FAIL() << "expected TrackingError";
  } catch (const TrackingError& e) {
    EXPECT_STREQ(e.what(), "insufficient overlap");
  }
}

TEST(Tracking, DefaultsAndValidation) {
  TrackingParams p;
  EXPECT_EQ(p.max_iterations, 20);
  EXPECT_DOUBLE_EQ(p.convergence_threshold, 1e-5);
  EXPECT_DOUBLE_EQ(p.huber_delta, 0.02);
  EXPECT_EQ(p.subsample_stride, 2);
  GradientSdfVolume vol(0.02, 0.1);
  const DepthFrame depth(testing::small_intrinsics());
  p.max_iterations = 0;
  EXPECT_THROW(track_frame(vol, depth, Pose::Identity(), p), std::invalid_argument);
}

}  // namespace
}  // namespace gsdf
