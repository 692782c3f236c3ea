// SPDX-License-Identifier: Apache-2.0
//
// Frame-to-model camera tracking against a GradientSdfVolume by Gauss-Newton
// on the sum of squared Taylor distances of the back-projected depth points.

#pragma once

#include "gsdf/geometry.hpp"
#include "gsdf/volume.hpp"

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gsdf {

class TrackingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrackingParams {
  int max_iterations = 20;
  double convergence_threshold = 1e-5;  // on the twist update norm
  double huber_delta = 0.02;            // meters
  int subsample_stride = 2;
  double depth_cutoff = 3.5;
  std::size_t min_residuals = 100;
};

struct TrackResult {
  Pose pose;
  double final_cost = 0.0;  // mean robust cost per residual, m^2
  int iterations = 0;
  std::size_t inlier_count = 0;
  std::size_t residual_count = 0;
  double first_update_norm = 0.0;
  std::vector<double> cost_history;  // one entry per accepted iterate
};

struct PointResidual {
  double r = 0.0;
  Vec6 jacobian = Vec6::Zero();  // w.r.t. a left twist (v, w) on the pose
};

/// Residual of one camera-frame point against the volume at the given
/// camera-to-world pose, with J = [g^T, (p_w x g)^T]. nullopt when the Taylor
/// query has no estimate.
std::optional<PointResidual> residual_and_jacobian(const GradientSdfVolume& vol,
                                                   const Vec3& p_cam, const Pose& pose);

/// Throws TrackingError("insufficient overlap") with fewer than
/// params.min_residuals residuals, or when the normal equations stay singular
/// after damping.
TrackResult track_frame(const GradientSdfVolume& vol, const DepthFrame& depth, const Pose& init,
                        const TrackingParams& params);

double huber_cost(double r, double delta);
double huber_weight(double r, double delta);

struct IcpEstimate {
  double distance = 0.0;
  Vec3 gradient = Vec3::Zero();
};

/// Unsigned point-to-point distance; throws std::domain_error when p == q.
IcpEstimate icp_point_to_point(const Vec3& p, const Vec3& q);
/// Signed point-to-plane distance along the unit normal n.
IcpEstimate icp_point_to_plane(const Vec3& p, const Vec3& q, const Vec3& n);

}  // namespace gsdf
