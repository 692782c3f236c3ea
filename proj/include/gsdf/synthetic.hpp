// SPDX-License-Identifier: Apache-2.0
//
// Analytic sphere scenes: depth/color rendering with a quadratic axial noise
// model, ground-truth gradients, finite-difference gradients on the volume and
// the angular-deviation study comparing them with the stored gradients.

#pragma once

#include "gsdf/fusion.hpp"
#include "gsdf/geometry.hpp"
#include "gsdf/volume.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace gsdf {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct SphereScene {
  std::vector<Sphere> spheres;
  std::vector<Pose> trajectory;
  bool noise_enabled = false;
  std::uint64_t seed = 0;
};

struct SceneOptions {
  int sphere_count = 5;
  double radius_min = 0.15;
  double radius_max = 0.4;
  double box_size = 1.0;  // sphere centers uniform in a cube of this edge, at the origin
  int pose_count = 60;
  double orbit_radius_min = 1.6;
  double orbit_radius_max = 2.0;
  double elevation_min_deg = -20.0;
  double elevation_max_deg = 50.0;
  bool noise_enabled = true;
};

/// Camera-to-world pose at `eye` looking at `target` (+z forward, +y down in
/// the image, `up` roughly opposite to image y).
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// Random non-overlapping spheres and a jittered orbit around them, fully
/// determined by the seed.
SphereScene make_random_sphere_scene(std::uint64_t seed, const SceneOptions& options = {});

/// Standard deviation of the axial depth noise at depth z (meters).
inline double axial_noise_sigma(double z) { return 1.425e-3 * z * z; }

/// Nearest ray-sphere hit depth (camera z) per pixel; 0 where the ray misses.
/// With scene.noise_enabled, Gaussian axial noise is drawn from a generator
/// seeded by (scene.seed, frame_index). Throws GeometryError when the camera is
/// inside a sphere.
DepthFrame render_sphere_depth(const SphereScene& scene, const Pose& pose, const Intrinsics& intr,
                               std::uint64_t frame_index = 0);

/// Smooth procedural RGB texture used for color rendering.
Vec3 surface_color(const Vec3& p_world);

/// Color image of the noise-free scene textured with surface_color.
ColorFrame render_sphere_color(const SphereScene& scene, const Pose& pose,
                               const Intrinsics& intr);

/// Radial direction (p - c) / |p - c|; throws std::domain_error when p == c.
Vec3 gt_sphere_gradient(const Vec3& p, const Vec3& center);

/// Index of the sphere with the smallest unsigned distance to p.
std::optional<std::size_t> nearest_sphere(const SphereScene& scene, const Vec3& p);

enum class FdScheme { kForward, kBackward, kCentral };

/// Per-axis finite difference of the stored distances; nullopt when a needed
/// neighbor is missing or unobserved.
std::optional<Vec3> finite_difference_gradient(const GradientSdfVolume& vol, const VoxelKey& key,
                                               FdScheme scheme);

/// Gradient estimates compared in the deviation study.
enum class GradientSource { kStored = 0, kForward, kBackward, kCentral };
inline constexpr std::size_t kGradientSourceCount = 4;
std::string_view to_string(GradientSource source);

struct SchemeStats {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
  std::size_t count = 0;
};

struct ThresholdRow {
  int threshold = 0;  // band |psi| <= threshold * voxel_size
  std::array<SchemeStats, kGradientSourceCount> sources{};

  const SchemeStats& operator[](GradientSource s) const {
    return sources[static_cast<std::size_t>(s)];
  }
};

struct DeviationStats {
  std::vector<ThresholdRow> rows;
};

/// Angle in degrees between two nonzero vectors.
double angle_between_deg(const Vec3& a, const Vec3& b);

/// Angular deviation of every gradient estimate from the nearest sphere's
/// radial direction. Estimates are SDF gradients (pointing into objects), so
/// they are negated before comparison. Voxels need a valid stored gradient and
/// all six face neighbors; voxels within one voxel of the medial region
/// between spheres, or of a sphere center, are excluded.
DeviationStats gradient_deviation_stats(const GradientSdfVolume& vol, const SphereScene& scene,
                                        int max_band);

struct GradientStudyConfig {
  std::uint64_t seed = 42;
  double voxel_size = 0.01;
  double trunc_factor = 10.0;
  bool noise_enabled = true;
  int sphere_count = 5;
  int pose_count = 60;
  int max_band = 10;
  Intrinsics intrinsics{};
  /// Remaining fusion settings; voxel size and truncation come from above.
  FusionParams fusion{};
};

struct GradientStudy {
  SphereScene scene;
  GradientSdfVolume volume{0.01, 0.1};
  DeviationStats stats;
};

/// Builds the scene, fuses all frames at ground-truth poses and computes the
/// deviation statistics.
GradientStudy run_gradient_study(const GradientStudyConfig& config);

/// CSV with header "threshold,scheme,mean,median,p95,count".
void write_stats_csv(const DeviationStats& stats, std::ostream& out);
/// Whitespace-separated columns for gnuplot: threshold, then mean/median/p95
/// for stored and central differences.
void write_stats_plot_data(const DeviationStats& stats, std::ostream& out);

/// Normal-map PNGs of one z-slice of the volume for the ground truth and every
/// gradient source, colored (n + 1) / 2. Returns the written paths.
std::vector<std::filesystem::path> write_gradient_slices(const GradientSdfVolume& vol,
                                                         const SphereScene& scene,
                                                         std::int32_t slice_z,
                                                         const std::filesystem::path& dir);

}  // namespace gsdf
