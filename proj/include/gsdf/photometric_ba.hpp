// SPDX-License-Identifier: Apache-2.0
//
// Implicit photometric bundle adjustment. Every surface voxel is projected
// into all keyframes through its closest surface point v - psi * g; the cost
// is the robust deviation of each observed intensity from the voxel's mean
// intensity over the frames that see it, plus a quadratic anchor keeping the
// distances near their depth-fused values. Poses and distances are refined
// alternately; the voxel gradient directions stay fixed.

#pragma once

#include "gsdf/geometry.hpp"
#include "gsdf/volume.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gsdf {

struct Keyframe {
  std::size_t id = 0;
  ColorFrame color;
  Pose pose;                        // camera to world, optimized in place
  std::optional<DepthFrame> depth;  // enables the occlusion test when present
};

enum class RobustLoss { kHuber, kSquared };
enum class BaScope { kFull, kPoseOnly };
enum class PoseCoupling { kCoupled, kDecoupled };

struct BaParams {
  double keyframe_ratio = 0.10;
  RobustLoss loss = RobustLoss::kHuber;
  double robust_delta = 0.1;         // intensity units, colors in [0, 1]
  double regularizer_weight = 0.01;  // per cm^2 of distance change
  int max_outer_iterations = 10;
  BaScope scope = BaScope::kFull;
  PoseCoupling coupling = PoseCoupling::kDecoupled;
  /// Voxels with |psi| <= surface_band * voxel_size carry photometric terms.
  double surface_band = 1.0;
  /// Occlusion test tolerance |z_cam - D(uv)| in voxel sizes.
  double depth_consistency = 3.0;
  /// Stop when the largest pose update norm falls below this.
  double convergence_threshold = 1e-7;

  /// Regularizer weight for distances in meters (1 cm^-2 = 1e4 m^-2).
  double regularizer_per_m2() const { return regularizer_weight * 1e4; }
  /// Throws std::invalid_argument when out of range.
  void validate() const;
};

/// Indices 0, k, 2k, ... below frame_count with k = ceil(1 / ratio).
/// Throws std::invalid_argument unless 0 < ratio <= 1.
std::vector<std::size_t> select_keyframes(std::size_t frame_count, double ratio);

struct VoxelObservation {
  VoxelKey key;
  std::size_t frame = 0;  // index into the keyframe list
  bool visible = false;
  Vec2 uv = Vec2::Zero();
  Vec3 intensity = Vec3::Zero();  // r, g, b; valid when visible
};

/// Projects the voxel's closest surface point into the keyframe. Visible iff
/// the voxel is observed with a valid gradient, the point lies in front of
/// the camera, the pixel is at least one pixel inside the image border, and,
/// when the keyframe carries depth, the depth there agrees within
/// depth_consistency voxel sizes.
VoxelObservation project_voxel_surface_point(const GradientSdfVolume& vol, const VoxelKey& key,
                                             const Keyframe& keyframe, std::size_t frame_index,
                                             const BaParams& params = {});

/// Robust loss value for one residual.
double robust_loss(double r, const BaParams& params);

/// Sum over voxels and channels of loss(I - mean) for intensity lists given
/// per voxel. Voxels with no samples contribute 0.
double photometric_energy(const std::vector<std::vector<Vec3>>& intensities,
                          const BaParams& params);
/// Sum over voxels and channels of N * Var (population variance).
double variance_energy(const std::vector<std::vector<Vec3>>& intensities);

/// psi of every stored voxel; the regularizer anchor.
using DistanceMap = std::unordered_map<VoxelKey, double, VoxelKeyHash>;
DistanceMap snapshot_distances(const GradientSdfVolume& vol);

/// Voxels carrying photometric terms, in key order.
std::vector<VoxelKey> surface_voxels(const GradientSdfVolume& vol, const BaParams& params);

/// Visible observations of every surface voxel, grouped per voxel in the order
/// of surface_voxels.
std::vector<std::vector<VoxelObservation>> gather_observations(
    const GradientSdfVolume& vol, const std::vector<Keyframe>& keyframes, const BaParams& params);

/// Photometric energy of the current state plus
/// lambda * sum (psi - anchor)^2 over anchored voxels (no anchor: no term).
double ba_energy(const GradientSdfVolume& vol, const std::vector<Keyframe>& keyframes,
                 const BaParams& params, const DistanceMap* anchor = nullptr);

struct PoseOptimizationReport {
  int iterations = 0;
  bool converged = false;
  std::string message;
  /// Norm of the first twist update of every keyframe (0 for the gauge frame).
  std::vector<double> first_update_norms;
  std::vector<double> energy_history;
};

/// Keyframe 0 stays fixed as the gauge. Decoupled: each sweep takes one
/// Gauss-Newton step per frame against the means of the previous sweep.
/// Coupled: Gauss-Newton on the joint energy, means included. Throws
/// std::invalid_argument for fewer than two keyframes.
PoseOptimizationReport optimize_poses(const GradientSdfVolume& vol,
                                      std::vector<Keyframe>& keyframes, const BaParams& params);

struct DistanceOptimizationReport {
  std::size_t voxels_updated = 0;
  std::size_t voxels_skipped = 0;  // fewer than two observations
  double mean_abs_change = 0.0;
};

/// One Gauss-Newton step per surface voxel on its photometric terms plus the
/// anchor, keeping the gradient direction fixed. Voxels are independent.
DistanceOptimizationReport optimize_distances(GradientSdfVolume& vol,
                                              const std::vector<Keyframe>& keyframes,
                                              const BaParams& params, const DistanceMap& anchor);

/// Mean observed color of every voxel with a valid gradient; voxels seen by
/// no keyframe are absent.
std::unordered_map<VoxelKey, Vec3, VoxelKeyHash> mean_voxel_color(
    const GradientSdfVolume& vol, const std::vector<Keyframe>& keyframes,
    const BaParams& params = {});

struct BaReport {
  int outer_iterations = 0;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  std::vector<PoseOptimizationReport> pose_sweeps;
  std::vector<DistanceOptimizationReport> distance_sweeps;
};

/// Alternates one pose sweep and (for BaScope::kFull) one distance sweep per
/// outer iteration. Distances are anchored to their values on entry.
BaReport run_bundle_adjustment(GradientSdfVolume& vol, std::vector<Keyframe>& keyframes,
                               const BaParams& params);

}  // namespace gsdf
