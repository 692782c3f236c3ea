// SPDX-License-Identifier: Apache-2.0

#include "gsdf/volume.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <sstream>

namespace gsdf {
namespace {

using testing::analytic_volume;

GradVoxel make_voxel(float dist, Eigen::Vector3f grad, float weight = 1.0f) {
  GradVoxel v;
  v.dist = dist;
  v.weight = weight;
  v.grad = grad;
  return v;
}

TEST(WorldToKey, Examples) {
  EXPECT_EQ(world_to_key(Vec3(0, 0, 0), 0.02), (VoxelKey{0, 0, 0}));
  EXPECT_EQ(world_to_key(Vec3(0.011, 0, 0), 0.02), (VoxelKey{1, 0, 0}));
  EXPECT_EQ(world_to_key(Vec3(-0.011, 0.009, 0), 0.02), (VoxelKey{-1, 0, 0}));
}

TEST(WorldToKey, HalvesRoundAwayFromZero) {
  EXPECT_EQ(world_to_key(Vec3(0.5, -0.5, 1.5), 1.0), (VoxelKey{1, -1, 2}));
  EXPECT_EQ(world_to_key(Vec3(-2.5, 2.4999, -0.4999), 1.0), (VoxelKey{-3, 2, 0}));
}

TEST(WorldToKey, NearestCenter) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const VoxelKey k = world_to_key(p, 0.03);
    const Vec3 d = (p - key_to_world(k, 0.03)).cwiseAbs();
    EXPECT_LE(d.maxCoeff(), 0.015 + 1e-12);
  }
}

TEST(KeyToWorld, ExactMultiple) {
  EXPECT_EQ(key_to_world({3, -2, 7}, 0.5), Vec3(1.5, -1.0, 3.5));
}

TEST(NormalizedGradient, Examples) {
  EXPECT_LT((*normalized_gradient(make_voxel(0, {0, 0, 2.5f})) - Vec3(0, 0, 1)).norm(), 1e-12);
  EXPECT_LT((*normalized_gradient(make_voxel(0, {3, 4, 0})) - Vec3(0.6, 0.8, 0)).norm(), 1e-7);
  EXPECT_FALSE(normalized_gradient(make_voxel(0, {0, 0, 0})).has_value());
  EXPECT_FALSE(normalized_gradient(make_voxel(0, {1e-7f, 0, 0})).has_value());
  const auto g = normalized_gradient(make_voxel(0, {-1.3f, 0.2f, 7.1f}));
  EXPECT_NEAR(g->norm(), 1.0, 1e-9);
}

TEST(Volume, RejectsBadParameters) {
  EXPECT_THROW(GradientSdfVolume(0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(GradientSdfVolume(0.02, 0.01), std::invalid_argument);
}

TEST(TaylorQuery, AtVoxelCenterReturnsPsi) {
  GradientSdfVolume vol(0.02, 0.1);
  vol.get_or_insert({1, 2, 3}) = make_voxel(0.013f, {0, 0, 1});
  const DistanceQuery q = taylor_query(vol, vol.center({1, 2, 3}));
  ASSERT_TRUE(q.ok());
  EXPECT_DOUBLE_EQ(q.distance, static_cast<double>(0.013f));
}

TEST(TaylorQuery, FirstOrderArithmetic) {
  GradientSdfVolume vol(0.02, 0.1);
  vol.get_or_insert({0, 0, 0}) = make_voxel(0.02f, {0, 0, 4});
  const DistanceQuery q = taylor_query(vol, Vec3(0, 0, 0.009));
  ASSERT_TRUE(q.ok());
  EXPECT_NEAR(q.distance, 0.029, 1e-9);
  EXPECT_EQ(q.gradient, Vec3(0, 0, 1));
}

TEST(TaylorQuery, Failures) {
  GradientSdfVolume vol(0.02, 0.1);
  EXPECT_EQ(taylor_query(vol, Vec3::Zero()).status, QueryStatus::kNoEstimate);
  vol.get_or_insert({0, 0, 0}) = make_voxel(0.0f, {0, 0, 1}, 0.0f);
  EXPECT_EQ(taylor_query(vol, Vec3::Zero()).status, QueryStatus::kNoEstimate);
  vol.get_or_insert({0, 0, 0}) = make_voxel(0.0f, {0, 0, 0}, 1.0f);
  EXPECT_EQ(taylor_query(vol, Vec3::Zero()).status, QueryStatus::kDegenerateGradient);
}

TEST(ReadCount, AuditedQueries) {
  const GradientSdfVolume vol = analytic_volume(
      0.1, 0.3, -2, 2, [](const Vec3& p) { return p.z(); }, [](const Vec3&) { return Vec3::UnitZ(); }, false);
  const Vec3 p(0.03, -0.04, 0.05);
  EXPECT_EQ(count_voxel_reads([&] { (void)taylor_query(vol, p); }), 1u);
  EXPECT_EQ(count_voxel_reads([&] { (void)trilinear_distance(vol, p); }), 8u);
  EXPECT_EQ(count_voxel_reads([&] { (void)world_to_key(p, 0.1); }), 0u);
  EXPECT_EQ(count_voxel_reads([&] { (void)trilinear_query(vol, p); }), 32u);
}

TEST(Trilinear, ConstantField) {
  const GradientSdfVolume vol = analytic_volume(
      0.1, 0.3, 0, 1, [](const Vec3&) { return 0.07; }, [](const Vec3&) { return Vec3::UnitZ(); }, false);
  const DistanceQuery q = trilinear_distance(vol, Vec3(0.037, 0.061, 0.012));
  ASSERT_TRUE(q.ok());
  EXPECT_NEAR(q.distance, 0.07, 1e-7);
}

TEST(Trilinear, LinearFieldGradient) {
  // psi(v) = v_z holds exactly in float for these centers.
  const GradientSdfVolume vol = analytic_volume(
      0.25, 1.0, -3, 3, [](const Vec3& p) { return p.z(); }, [](const Vec3&) { return Vec3::UnitZ(); }, false);
  const DistanceQuery q = trilinear_query(vol, Vec3(0.1, -0.07, 0.13));
  ASSERT_TRUE(q.ok());
  EXPECT_NEAR(q.distance, 0.13, 1e-9);
  EXPECT_LT((q.gradient - Vec3::UnitZ()).norm(), 1e-9);
}

TEST(Trilinear, MatchesBruteForceOracle) {
  const double vs = 0.05;
  GradientSdfVolume vol(vs, 1.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> val(-0.5, 0.5);
  double grid[4][4][4];
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        const float d = static_cast<float>(val(rng));
        grid[z][y][x] = d;
        vol.get_or_insert({x, y, z}) = make_voxel(d, {1, 0, 0});
      }
  std::uniform_real_distribution<double> coord(0.0, 3.0 * vs);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p(coord(rng), coord(rng), coord(rng));
    // Oracle: sum over all 64 samples of the tensor hat-function weights.
    double expected = 0.0;
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          const double wx = std::max(0.0, 1.0 - std::abs(p.x() / vs - x));
          const double wy = std::max(0.0, 1.0 - std::abs(p.y() / vs - y));
          const double wz = std::max(0.0, 1.0 - std::abs(p.z() / vs - z));
          expected += wx * wy * wz * grid[z][y][x];
        }
    const DistanceQuery q = trilinear_distance(vol, p);
    ASSERT_TRUE(q.ok());
    EXPECT_NEAR(q.distance, expected, 1e-12);
  }
}

TEST(Trilinear, MissingCornerIsIncomplete) {
  GradientSdfVolume vol = analytic_volume(
      0.1, 0.3, 0, 1, [](const Vec3&) { return 0.0; }, [](const Vec3&) { return Vec3::UnitZ(); }, false);
  vol.erase({1, 1, 1});
  EXPECT_EQ(trilinear_distance(vol, Vec3(0.05, 0.05, 0.05)).status, QueryStatus::kIncompleteNeighborhood);
}

TEST(ClosestSurfacePoint, Examples) {
  GradientSdfVolume vol(0.1, 0.3);
  vol.get_or_insert({1, 0, 0}) = make_voxel(0.05f, {1, 0, 0});
  vol.get_or_insert({2, 0, 0}) = make_voxel(0.0f, {0, 1, 0});
  vol.get_or_insert({3, 0, 0}) = make_voxel(0.0f, {0, 0, 0});
  EXPECT_LT((*closest_surface_point(vol, {1, 0, 0}) - Vec3(0.05, 0, 0)).norm(), 1e-8);
  EXPECT_EQ(*closest_surface_point(vol, {2, 0, 0}), vol.center({2, 0, 0}));
  EXPECT_FALSE(closest_surface_point(vol, {3, 0, 0}).has_value());
  EXPECT_FALSE(closest_surface_point(vol, {4, 0, 0}).has_value());
}

TEST(Snapshot, BitExactRoundTrip) {
  GradientSdfVolume vol(0.02, 0.1);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> key(-50, 50);
  std::uniform_real_distribution<float> val(-1.0f, 1.0f);
  for (int i = 0; i < 500; ++i) {
    vol.get_or_insert({key(rng), key(rng), key(rng)}) =
        make_voxel(val(rng), {val(rng), val(rng), val(rng)}, std::abs(val(rng)) + 0.1f);
  }
  std::stringstream a;
  write_snapshot(vol, a);
  const GradientSdfVolume back = read_snapshot(a);
  EXPECT_TRUE(back == vol);
  std::stringstream b;
  write_snapshot(back, b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Snapshot, Layout) {
  GradientSdfVolume vol(0.5, 2.0);
  vol.get_or_insert({1, -2, 3}) = make_voxel(0.25f, {1, 2, 3}, 4.0f);
  std::stringstream s;
  write_snapshot(vol, s);
  const std::string bytes = s.str();
  ASSERT_EQ(bytes.size(), 5u + 16u + 32u);
  EXPECT_EQ(bytes.substr(0, 5), "GSDF1");
  double vs = 0.0;
  std::memcpy(&vs, bytes.data() + 5, 8);
  EXPECT_EQ(vs, 0.5);
  std::int32_t ky = 0;
  std::memcpy(&ky, bytes.data() + 21 + 4, 4);
  EXPECT_EQ(ky, -2);
  float w = 0.0f;
  std::memcpy(&w, bytes.data() + 21 + 16, 4);
  EXPECT_EQ(w, 4.0f);
}

TEST(Snapshot, RejectsGarbage) {
  std::stringstream bad("NOTGSDF");
  EXPECT_THROW(read_snapshot(bad), std::runtime_error);
  GradientSdfVolume vol(0.5, 2.0);
  vol.get_or_insert({0, 0, 0}) = make_voxel(0.0f, {1, 0, 0});
  std::stringstream s;
  write_snapshot(vol, s);
  std::stringstream cut(s.str().substr(0, s.str().size() - 3));
  EXPECT_THROW(read_snapshot(cut), std::runtime_error);
}

}  // namespace
}  // namespace gsdf
