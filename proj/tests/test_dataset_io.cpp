// SPDX-License-Identifier: Apache-2.0

#include "gsdf/dataset_io.hpp"
#include "gsdf/image_io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace gsdf {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gsdf_test_dataset_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec6 xi;
  for (int i = 0; i < 6; ++i) xi[i] = n(rng);
  return se3_exp(xi);
}

TEST(PoseLine, IdentityFormat) {
  EXPECT_EQ(format_pose_line({0.0, Pose::Identity()}),
            "0.000000 0.000000 0.000000 0.000000 0.000000 0.000000 0.000000 1.000000");
}

TEST(PoseLine, QuaternionSignIsCanonical) {
  const Pose p = Pose::FromQuaternion(Eigen::Quaterniond(-0.5, 0.5, -0.5, 0.5), Vec3(1, 2, 3));
  EXPECT_EQ(format_pose_line({12.5, p}), "12.500000 1.000000 2.000000 3.000000 -0.500000 0.500000 -0.500000 0.500000");
}

TEST(Trajectory, RoundTripOfRandomPoses) {
  std::mt19937_64 rng(31);
  Trajectory traj;
  for (int i = 0; i < 100; ++i) traj.push_back({1305031102.175304 + 0.033 * i, random_pose(rng)});
  std::stringstream io;
  write_trajectory(traj, io);
  const Trajectory back = read_trajectory(io);
  ASSERT_EQ(back.size(), traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_NEAR(back[i].timestamp, traj[i].timestamp, 1e-6);
    EXPECT_LE((back[i].pose.translation - traj[i].pose.translation).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE(rotation_angle(back[i].pose.rotation * traj[i].pose.rotation.transpose()), 1e-5);
  }
}

TEST(Trajectory, CommentsAndBlankLinesSkipped) {
  std::istringstream in(
      "# ground truth trajectory\n# timestamp tx ty tz qx qy qz qw\n\n"
      "1.0 0 0 0 0 0 0 1\n   \n2.0 1 2 3 0 0 0.7071067811865476 0.7071067811865476\n");
  const Trajectory t = read_trajectory(in);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[1].pose.translation, Vec3(1, 2, 3));
  EXPECT_LT((t[1].pose * Vec3::UnitX() - Vec3(1, 3, 3)).norm(), 1e-12);
}

TEST(Trajectory, BadLineNamesLineNumber) {
  std::istringstream in("# header\n1.0 0 0 0 0 0 0 1\n2.0 0 0 zero 0 0 0 1\n");
  try {
    read_trajectory(in);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream backwards("2.0 0 0 0 0 0 0 1\n1.0 0 0 0 0 0 0 1\n");
  EXPECT_THROW(read_trajectory(backwards), DatasetError);
  EXPECT_THROW(read_trajectory(fs::path("/nonexistent/trajectory.txt")), DatasetError);
}

TEST(Association, GapExamples) {
  EXPECT_EQ(associate_timestamps({1.000}, {1.015}, 0.02).size(), 1u);
  EXPECT_TRUE(associate_timestamps({1.000}, {1.030}, 0.02).empty());
}

TEST(Association, GreedyOneToOne) {
  // 1.01 is closer to 1.012 than 1.0 is, so 1.0 falls back to 0.995.
  const auto m = associate_timestamps({1.0, 1.01, 2.0}, {0.995, 1.012, 1.5}, 0.02);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], (std::pair<std::size_t, std::size_t>{0, 0}));
  EXPECT_EQ(m[1], (std::pair<std::size_t, std::size_t>{1, 1}));
}

Trajectory positions_to_trajectory(const std::vector<Vec3>& pts, double t0 = 0.0) {
  Trajectory t;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t.push_back({t0 + 0.1 * static_cast<double>(i), Pose::FromQuaternion(Eigen::Quaterniond::Identity(), pts[i])});
  }
  return t;
}

TEST(Ate, IdenticalTrajectoriesGiveZero) {
  std::mt19937_64 rng(2);
  Trajectory gt;
  for (int i = 0; i < 20; ++i) gt.push_back({0.1 * i, random_pose(rng)});
  const AteResult r = absolute_trajectory_error(gt, gt);
  EXPECT_EQ(r.pairs, 20u);
  EXPECT_LT(r.rmse_cm, 1e-9);
}

TEST(Ate, InvariantUnderGlobalRigidTransform) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.02);
  Trajectory gt, est;
  for (int i = 0; i < 50; ++i) {
    const Pose p = random_pose(rng);
    gt.push_back({0.1 * i, p});
    Pose q = p;
    q.translation += Vec3(noise(rng), noise(rng), noise(rng));
    est.push_back({0.1 * i + 0.004, q});
  }
  const double base = ate_rmse_cm(est, gt);
  EXPECT_GT(base, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose G = random_pose(rng);
    Trajectory moved = est, moved_gt = gt;
    for (auto& p : moved) p.pose = G * p.pose;
    for (auto& p : moved_gt) p.pose = G * p.pose;
    EXPECT_NEAR(ate_rmse_cm(moved, gt), base, 1e-9);
    EXPECT_NEAR(ate_rmse_cm(est, moved_gt), base, 1e-9);
  }
}

TEST(Ate, HandBuiltResiduals) {
  // Equilateral triangle around the origin; every estimate is pushed 1 cm
  // radially outward. The residuals sum to zero and their cross-covariance
  // with the positions is symmetric, so no rigid motion reduces them.
  std::vector<Vec3> truth, est;
  for (int i = 0; i < 3; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 3.0;
    const Vec3 p(0.5 * std::cos(a), 0.5 * std::sin(a), 0.0);
    truth.push_back(p);
    est.push_back(p + 0.01 * p.normalized());
  }
  const Trajectory gt = positions_to_trajectory(truth);
  Trajectory moved = positions_to_trajectory(est);
  const Pose G = se3_exp((Vec6() << 0.3, -1.0, 0.2, 0.4, -0.2, 1.1).finished());
  for (auto& p : moved) p.pose = G * p.pose;
  const AteResult r = absolute_trajectory_error(moved, gt);
  EXPECT_EQ(r.pairs, 3u);
  EXPECT_NEAR(r.rmse_cm, 1.0, 1e-9);

  // Brute-force check of optimality: no nearby rigid correction of the
  // returned alignment lowers the error.
  auto rmse_with = [&](const Pose& align) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += (align * moved[i].pose.translation - truth[i]).squaredNorm();
    return 100.0 * std::sqrt(s / 3.0);
  };
  EXPECT_NEAR(rmse_with(r.alignment), 1.0, 1e-9);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int i = 0; i < 2000; ++i) {
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi[k] = n(rng);
    EXPECT_GE(rmse_with(se3_exp(xi) * r.alignment), 1.0 - 1e-12);
  }
}

TEST(Ate, TooFewPairs) {
  const Trajectory one = positions_to_trajectory({Vec3::Zero()});
  EXPECT_THROW(absolute_trajectory_error(one, one), DatasetError);
  const Trajectory a = positions_to_trajectory({Vec3::Zero(), Vec3::UnitX()}, 0.0);
  const Trajectory b = positions_to_trajectory({Vec3::Zero(), Vec3::UnitX()}, 5.0);
  EXPECT_THROW(absolute_trajectory_error(a, b), DatasetError);
}

TEST(AlignRigid, RecoversKnownMotion) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Pose G = random_pose(rng);
  std::vector<Vec3> src, dst;
  for (int i = 0; i < 10; ++i) {
    src.emplace_back(u(rng), u(rng), u(rng));
    dst.push_back(G * src.back());
  }
  const Pose a = align_rigid(src, dst);
  EXPECT_LT((a.translation - G.translation).norm(), 1e-12);
  EXPECT_LT(rotation_angle(a.rotation * G.rotation.transpose()), 1e-12);
  EXPECT_NEAR(a.rotation.determinant(), 1.0, 1e-12);
}

TEST(DepthPng, ScaleAndRoundTrip) {
  const fs::path dir = fresh_dir("png");
  const Intrinsics k = testing::small_intrinsics(8, 6);
  DepthFrame depth(k);
  depth.values(0, 0) = 1.0f;
  depth.values(1, 0) = 0.0f;
  depth.values(2, 0) = 1.23456f;
  depth.values(3, 0) = 12.0f;
  write_depth_png(dir / "d.png", depth);
  const DepthFrame back = read_depth_png(dir / "d.png", k);
  EXPECT_EQ(back.values(0, 0), 1.0f);  // raw 5000
  EXPECT_FALSE(back.valid(1, 0));
  EXPECT_LE(std::abs(back.values(2, 0) - 1.23456), 0.5 / kTumDepthScale + 1e-7);
  EXPECT_NEAR(back.values(3, 0), 12.0, 1e-6);
  // Values on the raw grid survive exactly.
  depth.values(4, 0) = static_cast<float>(6173.0 / kTumDepthScale);
  write_depth_png(dir / "d.png", depth);
  EXPECT_EQ(read_depth_png(dir / "d.png", k).values(4, 0), depth.values(4, 0));
  EXPECT_THROW(read_depth_png(dir / "d.png", testing::small_intrinsics(9, 6)), ImageIoError);
  fs::remove_all(dir);
}

TEST(ColorPng, RoundTrip) {
  const fs::path dir = fresh_dir("color");
  const Intrinsics k = testing::small_intrinsics(4, 3);
  ColorFrame c(k);
  c.channels[0](1, 1) = 1.0f;
  c.channels[1](2, 0) = 128.0f / 255.0f;
  write_color_png(dir / "c.png", c);
  const ColorFrame back = read_color_png(dir / "c.png", k);
  EXPECT_EQ(back.channels[0](1, 1), 1.0f);
  EXPECT_NEAR(back.channels[1](2, 0), 128.0 / 255.0, 1e-7);
  EXPECT_EQ(back.channels[2](0, 0), 0.0f);
  fs::remove_all(dir);
}

TEST(CameraConfig, ParsesKeysAndKeepsDefaults) {
  const fs::path dir = fresh_dir("camera");
  {
    std::ofstream out(dir / "camera.txt");
    out << "# fr1 intrinsics\nfx=517.3\nfy = 516.5\ncx=318.6 # principal point\ndepth_scale=5208\n";
  }
  const CameraConfig c = read_camera_config(dir / "camera.txt");
  EXPECT_DOUBLE_EQ(c.intrinsics.fx, 517.3);
  EXPECT_DOUBLE_EQ(c.intrinsics.fy, 516.5);
  EXPECT_DOUBLE_EQ(c.intrinsics.cx, 318.6);
  EXPECT_DOUBLE_EQ(c.intrinsics.cy, 239.5);
  EXPECT_EQ(c.intrinsics.width, 640);
  EXPECT_DOUBLE_EQ(c.depth_scale, 5208.0);
  {
    std::ofstream out(dir / "bad.txt");
    out << "fx=abc\n";
  }
  EXPECT_THROW(read_camera_config(dir / "bad.txt"), DatasetError);
  fs::remove_all(dir);
}

class SphereSequence : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SceneOptions opt;
    opt.noise_enabled = false;
    scene_ = new SphereScene(make_random_sphere_scene(12, opt));
    dir_ = new fs::path(fresh_dir("sequence"));
    testing::write_sphere_sequence(*dir_, *scene_, testing::small_intrinsics(), 5);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
    delete scene_;
  }
  static inline SphereScene* scene_ = nullptr;
  static inline fs::path* dir_ = nullptr;
};

TEST_F(SphereSequence, IndexAndFrames) {
  const TumSequence seq = TumSequence::open(*dir_);
  ASSERT_EQ(seq.size(), 5u);
  EXPECT_EQ(seq.camera().intrinsics.width, 160);
  EXPECT_DOUBLE_EQ(seq.camera().intrinsics.fx, 131.25);
  ASSERT_TRUE(seq.ground_truth().has_value());
  EXPECT_EQ(seq.ground_truth()->size(), 5u);
  const SequenceEntry& e = seq.entry(2);
  EXPECT_NEAR(e.depth_timestamp, 1.0 + 2.0 / 30.0, 1e-6);
  ASSERT_TRUE(e.color_timestamp.has_value());
  EXPECT_NEAR(*e.color_timestamp - e.depth_timestamp, 0.005, 1e-6);
  const auto frame = seq.load(2);
  ASSERT_TRUE(frame.has_value());
  ASSERT_TRUE(frame->color.has_value());
  const DepthFrame expected =
      render_sphere_depth(*scene_, scene_->trajectory[2], testing::small_intrinsics(), 2);
  for (int v = 0; v < 120; v += 7)
    for (int u = 0; u < 160; u += 7) {
      EXPECT_EQ(frame->depth.valid(u, v), expected.valid(u, v));
      if (expected.valid(u, v)) EXPECT_NEAR(frame->depth.values(u, v), expected.values(u, v), 0.5 / kTumDepthScale + 1e-6);
    }
}

TEST_F(SphereSequence, Deterministic) {
  const TumSequence a = TumSequence::open(*dir_);
  const TumSequence b = TumSequence::open(*dir_);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.entry(i).depth_path, b.entry(i).depth_path);
    EXPECT_TRUE(a.load(i)->depth.values == b.load(i)->depth.values);
  }
}

TEST_F(SphereSequence, ColorBeyondGapIsDropped) {
  const TumSequence seq = TumSequence::open(*dir_, 0.004);
  ASSERT_EQ(seq.size(), 5u);
  EXPECT_FALSE(seq.entry(0).color_timestamp.has_value());
  const auto frame = seq.load(0);
  ASSERT_TRUE(frame.has_value());
  EXPECT_FALSE(frame->color.has_value());
}

TEST_F(SphereSequence, MalformedDepthSkipsFrameWithWarning) {
  const fs::path copy = fresh_dir("sequence_broken");
  fs::copy(*dir_, copy, fs::copy_options::recursive);
  const TumSequence seq = TumSequence::open(copy);
  {
    std::ofstream out(copy / seq.entry(1).depth_path, std::ios::binary | std::ios::trunc);
    out << "not a png";
  }
  ::testing::internal::CaptureStderr();
  const auto frame = seq.load(1);
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_FALSE(frame.has_value());
  EXPECT_NE(err.find("warning"), std::string::npos);
  EXPECT_TRUE(seq.load(2).has_value());
  fs::remove_all(copy);
}

TEST(TumSequenceErrors, MissingIndex) {
  const fs::path dir = fresh_dir("empty");
  EXPECT_THROW(TumSequence::open(dir), DatasetError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace gsdf
