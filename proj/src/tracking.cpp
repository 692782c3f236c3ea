// SPDX-License-Identifier: Apache-2.0

#include "gsdf/tracking.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gsdf {

double huber_cost(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? r * r : 2.0 * delta * a - delta * delta;
}

double huber_weight(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 1.0 : delta / a;
}

std::optional<PointResidual> residual_and_jacobian(const GradientSdfVolume& vol,
                                                   const Vec3& p_cam, const Pose& pose) {
  const Vec3 p_w = pose * p_cam;
  const DistanceQuery q = taylor_query(vol, p_w);
  if (!q.ok()) return std::nullopt;
  PointResidual out;
  out.r = q.distance;
  out.jacobian.head<3>() = q.gradient;
  out.jacobian.tail<3>() = p_w.cross(q.gradient);
  return out;
}

namespace {

struct NormalEquations {
  Mat6 H = Mat6::Zero();
  Vec6 b = Vec6::Zero();
  double cost = 0.0;
  std::size_t count = 0;
  std::size_t inliers = 0;

  double mean_cost() const { return count > 0 ? cost / static_cast<double>(count) : 0.0; }

  NormalEquations& operator+=(const NormalEquations& o) {
    H += o.H;
    b += o.b;
    cost += o.cost;
    count += o.count;
    inliers += o.inliers;
    return *this;
  }
};

NormalEquations linearize(const GradientSdfVolume& vol, const std::vector<Vec3>& points,
                          const Pose& pose, double delta) {
  const long n = static_cast<long>(points.size());
  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::vector<NormalEquations> partial(static_cast<std::size_t>(threads));

#pragma omp parallel num_threads(threads)
  {
    int tid = 0;
#ifdef _OPENMP
    tid = omp_get_thread_num();
#endif
    NormalEquations& acc = partial[static_cast<std::size_t>(tid)];
#pragma omp for schedule(static)
    for (long i = 0; i < n; ++i) {
      const auto res = residual_and_jacobian(vol, points[static_cast<std::size_t>(i)], pose);
      if (!res) continue;
      const double w = huber_weight(res->r, delta);
      acc.H.noalias() += w * res->jacobian * res->jacobian.transpose();
      acc.b.noalias() += w * res->r * res->jacobian;
      acc.cost += huber_cost(res->r, delta);
      ++acc.count;
      if (w == 1.0) ++acc.inliers;
    }
  }
  NormalEquations total;
  for (const auto& p : partial) total += p;
  return total;
}

// Solves H x = -b, retrying once with lambda = 1e-6 trace(H) on the diagonal.
Vec6 solve_normal_equations(const Mat6& H, const Vec6& b) {
  Eigen::LLT<Mat6> llt(H);
  if (llt.info() == Eigen::Success) {
    const Vec6 x = llt.solve(-b);
    if (x.allFinite()) return x;
  }
  const double lambda = 1e-6 * H.trace();
  Eigen::LLT<Mat6> damped(H + lambda * Mat6::Identity());
  if (!(lambda > 0.0) || damped.info() != Eigen::Success) {
    throw TrackingError("singular normal equations");
  }
  return damped.solve(-b);
}

}  // namespace

TrackResult track_frame(const GradientSdfVolume& vol, const DepthFrame& depth, const Pose& init,
                        const TrackingParams& params) {
  if (params.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(params.huber_delta > 0.0)) throw std::invalid_argument("huber_delta must be positive");
  const int stride = std::max(1, params.subsample_stride);

  const Intrinsics& intr = depth.intrinsics;
  std::vector<Vec3> points;
  points.reserve(static_cast<std::size_t>(intr.width / stride + 1) * (intr.height / stride + 1));
  for (int v = 0; v < intr.height; v += stride) {
    for (int u = 0; u < intr.width; u += stride) {
      if (!depth.valid(u, v)) continue;
      const double d = depth.values(u, v);
      if (d > params.depth_cutoff) continue;
      points.push_back(backproject(intr, Vec2(u, v), d));
    }
  }

  TrackResult result;
  result.pose = init;
  NormalEquations current = linearize(vol, points, init, params.huber_delta);
  if (current.count < params.min_residuals) throw TrackingError("insufficient overlap");
  result.cost_history.push_back(current.mean_cost());

  for (int it = 0; it < params.max_iterations; ++it) {
    const Vec6 step = solve_normal_equations(current.H, current.b);
    if (it == 0) result.first_update_norm = step.norm();

    // Accept only cost-non-increasing iterates; otherwise shrink the step.
    // Shrinking along the Gauss-Newton direction, unlike an isotropic
    // Levenberg term, commutes with rigid changes of the world frame.
    bool accepted = false;
    Vec6 trial = step;
    for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
      const Pose candidate = se3_exp(trial) * result.pose;
      NormalEquations next = linearize(vol, points, candidate, params.huber_delta);
      if (next.count >= params.min_residuals && next.mean_cost() <= current.mean_cost()) {
        result.pose = candidate;
        current = std::move(next);
        accepted = true;
      } else {
        trial *= 0.5;
      }
    }
    if (!accepted) break;
    ++result.iterations;
    result.cost_history.push_back(current.mean_cost());
    if (trial.norm() < params.convergence_threshold) break;
  }

  result.final_cost = current.mean_cost();
  result.inlier_count = current.inliers;
  result.residual_count = current.count;
  return result;
}

IcpEstimate icp_point_to_point(const Vec3& p, const Vec3& q) {
  const Vec3 diff = p - q;
  const double d = diff.norm();
  if (!(d > 0.0)) throw std::domain_error("point-to-point gradient undefined for p == q");
  return {d, diff / d};
}

IcpEstimate icp_point_to_plane(const Vec3& p, const Vec3& q, const Vec3& n) {
  return {n.dot(p - q), n};
}

}  // namespace gsdf
