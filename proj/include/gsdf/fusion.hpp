// SPDX-License-Identifier: Apache-2.0
//
// Depth-frame integration into a GradientSdfVolume: running weighted averages
// of distance and weight, and a weighted sum of inward surface normals as the
// gradient.

#pragma once

#include "gsdf/geometry.hpp"
#include "gsdf/volume.hpp"

#include <cstddef>

namespace gsdf {

/// How the per-voxel distance estimate is derived from a depth pixel.
enum class DistanceModel {
  /// d = z_voxel - D, the camera-axis distance between voxel center and
  /// observed surface.
  kProjective,
  /// d = n_in . (v - p), the distance of the voxel center to the tangent plane
  /// at the observed surface point. The measurement is repeated once at the
  /// pixel seeing the foot point v + d * n_out; voxels whose foot point is not
  /// seen are skipped for that frame.
  kPointToPlane,
};

struct FusionParams {
  double voxel_size = 0.02;
  double trunc_factor = 5.0;
  double depth_cutoff = 3.5;
  double normal_angle_max_deg = 75.0;
  /// Ray marching step; <= 0 means voxel_size / 2.
  double ray_step = 0.0;
  DistanceModel distance_model = DistanceModel::kPointToPlane;
  /// Pixel offset of the central differences used for normals.
  int normal_radius = 4;

  double truncation() const { return trunc_factor * voxel_size; }
  double step() const { return ray_step > 0.0 ? ray_step : 0.5 * voxel_size; }
  /// Throws std::invalid_argument when out of range.
  void validate() const;
};

/// Unit camera-frame normals facing the camera; NaN marks invalid pixels.
struct NormalMap {
  Image<Eigen::Vector3f> normals;

  NormalMap() = default;
  NormalMap(int width, int height);

  bool valid(int u, int v) const { return normals(u, v).allFinite(); }
  int width() const { return normals.width(); }
  int height() const { return normals.height(); }
};

/// Cross product of central differences of the back-projected neighbors
/// `radius` pixels away. Pixels closer than radius to the border or with an
/// invalid stencil depth are invalid.
NormalMap estimate_normals(const DepthFrame& depth, int radius = 1);

/// Linear weight: 1 on the observed side, falling to 0 at d = T behind the
/// surface. Throws std::domain_error for |d| > T.
double fusion_weight(double d, double truncation);

struct IntegrationStats {
  std::size_t pixels_used = 0;
  std::size_t voxels_updated = 0;
  std::size_t voxels_allocated = 0;
};

/// Marches every accepted pixel's ray through [D - T, D + T] and applies
///   psi <- (W psi + w d) / (W + w),  W <- W + w,  g <- g + w n_in
/// once per voxel. When several rays reach the same voxel in one frame, the
/// ray passing closest to the voxel center supplies the observation, so the
/// result does not depend on pixel order.
IntegrationStats integrate_frame(GradientSdfVolume& vol, const DepthFrame& depth,
                                 const NormalMap& normals, const Pose& pose,
                                 const FusionParams& params);

/// Convenience: estimate normals and integrate.
IntegrationStats integrate_frame(GradientSdfVolume& vol, const DepthFrame& depth,
                                 const Pose& pose, const FusionParams& params);

}  // namespace gsdf
