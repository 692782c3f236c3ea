// SPDX-License-Identifier: Apache-2.0

#include "gsdf/photometric_ba.hpp"

#include "gsdf/tracking.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gsdf {

void BaParams::validate() const {
  if (!(keyframe_ratio > 0.0 && keyframe_ratio <= 1.0)) {
    throw std::invalid_argument("keyframe_ratio must be in (0, 1]");
  }
  if (!(regularizer_weight >= 0.0)) throw std::invalid_argument("regularizer weight must be >= 0");
  if (!(robust_delta > 0.0)) throw std::invalid_argument("robust_delta must be positive");
  if (max_outer_iterations < 0) throw std::invalid_argument("max_outer_iterations must be >= 0");
  if (!(surface_band > 0.0)) throw std::invalid_argument("surface_band must be positive");
}

std::vector<std::size_t> select_keyframes(std::size_t frame_count, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("keyframe ratio must be in (0, 1]");
  // Guard against 1 / 0.1 evaluating to 10.000000000000002.
  const auto step = static_cast<std::size_t>(std::max(1.0, std::ceil(1.0 / ratio - 1e-9)));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frame_count; i += step) out.push_back(i);
  return out;
}

double robust_loss(double r, const BaParams& params) {
  return params.loss == RobustLoss::kSquared ? r * r : huber_cost(r, params.robust_delta);
}

namespace {

double robust_weight(double r, const BaParams& params) {
  return params.loss == RobustLoss::kSquared ? 1.0 : huber_weight(r, params.robust_delta);
}

using Mat36 = Eigen::Matrix<double, 3, 6>;

// Sample of one surface point in one keyframe, with derivatives of the three
// intensities w.r.t. a left twist on the keyframe pose and w.r.t. moving the
// point along -g (i.e. increasing psi).
struct Sample {
  bool visible = false;
  Vec2 uv = Vec2::Zero();
  Vec3 intensity = Vec3::Zero();
  Mat36 d_pose = Mat36::Zero();
  Vec3 d_psi = Vec3::Zero();
};

Sample sample_point(const Vec3& p_s, const Vec3& g_hat, const Keyframe& kf, double voxel_size,
                    const BaParams& params, bool with_jacobians) {
  Sample s;
  const Vec3 p_c = kf.pose.to_local(p_s);
  if (!(p_c.z() > 0.0)) return s;
  const Intrinsics& intr = kf.color.intrinsics;
  const Vec2 uv(intr.fx * p_c.x() / p_c.z() + intr.cx, intr.fy * p_c.y() / p_c.z() + intr.cy);
  if (!(uv.x() >= 1.0 && uv.y() >= 1.0 && uv.x() <= intr.width - 2.0 &&
        uv.y() <= intr.height - 2.0)) {
    return s;
  }
  if (kf.depth) {
    // Every pixel entering the bilinear sample must see this surface, which
    // keeps occluding and background colors out of the interpolation.
    const auto u0 = static_cast<int>(std::floor(uv.x()));
    const auto v0 = static_cast<int>(std::floor(uv.y()));
    for (int dv = 0; dv <= 1; ++dv) {
      for (int du = 0; du <= 1; ++du) {
        const int u = u0 + du, v = v0 + dv;
        if (!kf.depth->values.in_bounds(u, v) || !kf.depth->valid(u, v)) return s;
        if (std::abs(p_c.z() - kf.depth->values(u, v)) > params.depth_consistency * voxel_size) return s;
      }
    }
  }
  Eigen::Matrix<double, 3, 2> grad;
  for (int c = 0; c < 3; ++c) {
    const auto smp = bilinear_sample(kf.color, uv, c);
    if (!smp) return s;
    s.intensity[c] = smp->value;
    grad.row(c) = smp->gradient.transpose();
  }
  s.visible = true;
  s.uv = uv;
  if (!with_jacobians) return s;

  const double iz = 1.0 / p_c.z();
  Eigen::Matrix<double, 2, 3> d_proj;
  d_proj << intr.fx * iz, 0.0, -intr.fx * p_c.x() * iz * iz,
            0.0, intr.fy * iz, -intr.fy * p_c.y() * iz * iz;
  const Mat3 rt = kf.pose.rotation.transpose();
  Mat36 d_cam;
  d_cam.leftCols<3>() = -rt;
  d_cam.rightCols<3>() = rt * skew(p_s);
  const Eigen::Matrix<double, 3, 3> d_int_d_cam = grad * d_proj;
  s.d_pose = d_int_d_cam * d_cam;
  s.d_psi = d_int_d_cam * (-rt * g_hat);
  return s;
}

struct SurfaceVoxel {
  VoxelKey key;
  Vec3 center;
  Vec3 g_hat;
  double psi = 0.0;

  Vec3 surface_point() const { return center - psi * g_hat; }
  Vec3 surface_point(double d) const { return center - d * g_hat; }
};

std::vector<SurfaceVoxel> collect_surface(const GradientSdfVolume& vol, const BaParams& params) {
  std::vector<SurfaceVoxel> out;
  for (const VoxelKey& key : surface_voxels(vol, params)) {
    const GradVoxel* v = vol.find(key);
    out.push_back({key, vol.center(key), *normalized_gradient(*v), static_cast<double>(v->dist)});
  }
  return out;
}

Vec3 mean_of(const std::vector<Vec3>& xs) {
  Vec3 m = Vec3::Zero();
  for (const Vec3& x : xs) m += x;
  return xs.empty() ? m : Vec3(m / static_cast<double>(xs.size()));
}

// Visible intensities of every voxel in every keyframe at the current poses.
std::vector<std::vector<Vec3>> observe_all(const std::vector<SurfaceVoxel>& voxels,
                                           const std::vector<Keyframe>& keyframes,
                                           double voxel_size, const BaParams& params) {
  std::vector<std::vector<Vec3>> out(voxels.size());
  const long n = static_cast<long>(voxels.size());
#pragma omp parallel for schedule(static)
  for (long j = 0; j < n; ++j) {
    const SurfaceVoxel& sv = voxels[static_cast<std::size_t>(j)];
    for (const Keyframe& kf : keyframes) {
      const Sample s = sample_point(sv.surface_point(), sv.g_hat, kf, voxel_size, params, false);
      if (s.visible) out[static_cast<std::size_t>(j)].push_back(s.intensity);
    }
  }
  return out;
}

// Means of voxels seen at least twice; others are marked NaN and ignored.
std::vector<Vec3> voxel_means(const std::vector<std::vector<Vec3>>& obs) {
  std::vector<Vec3> means(obs.size(), Vec3::Constant(std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t j = 0; j < obs.size(); ++j) {
    if (obs[j].size() >= 2) means[j] = mean_of(obs[j]);
  }
  return means;
}

// Robust cost of one keyframe against frozen means, and its normal equations.
struct FrameSystem {
  Mat6 H = Mat6::Zero();
  Vec6 b = Vec6::Zero();
  double cost = 0.0;
  std::size_t count = 0;
  double mean_cost() const { return count > 0 ? cost / static_cast<double>(count) : 0.0; }
};

FrameSystem frame_system(const std::vector<SurfaceVoxel>& voxels, const std::vector<Vec3>& means,
                         const Keyframe& kf, double voxel_size, const BaParams& params,
                         bool with_jacobians) {
  FrameSystem sys;
  for (std::size_t j = 0; j < voxels.size(); ++j) {
    if (!means[j].allFinite()) continue;
    const Sample s = sample_point(voxels[j].surface_point(), voxels[j].g_hat, kf, voxel_size, params,
                                  with_jacobians);
    if (!s.visible) continue;
    for (int c = 0; c < 3; ++c) {
      const double r = s.intensity[c] - means[j][c];
      sys.cost += robust_loss(r, params);
      ++sys.count;
      if (!with_jacobians) continue;
      const double w = robust_weight(r, params);
      const Vec6 J = s.d_pose.row(c).transpose();
      sys.H.noalias() += w * J * J.transpose();
      sys.b.noalias() += w * r * J;
    }
  }
  return sys;
}

// Solves H x = -b; on failure adds Levenberg damping of growing strength.
template <typename Mat, typename Vec>
std::optional<Vec> damped_solve(const Mat& H, const Vec& b, double mu) {
  Mat A = H;
  if (mu > 0.0) A.diagonal().array() += mu;
  Eigen::LDLT<Mat> ldlt(A);
  if (ldlt.info() == Eigen::Success) {
    Vec x = ldlt.solve(-b);
    if (x.allFinite() && (A * x + b).norm() <= 1e-6 * (b.norm() + 1e-30)) return x;
  }
  return std::nullopt;
}

template <typename Mat, typename Vec>
std::optional<Vec> robust_solve(const Mat& H, const Vec& b) {
  if (auto x = damped_solve<Mat, Vec>(H, b, 0.0)) return x;
  double mu = 1e-6 * std::max(H.trace() / static_cast<double>(H.rows()), 1e-12);
  for (int attempt = 0; attempt < 8; ++attempt, mu *= 100.0) {
    if (auto x = damped_solve<Mat, Vec>(H, b, mu)) return x;
  }
  return std::nullopt;
}

double total_photometric(const std::vector<SurfaceVoxel>& voxels,
                         const std::vector<Keyframe>& keyframes, double voxel_size,
                         const BaParams& params) {
  return photometric_energy(observe_all(voxels, keyframes, voxel_size, params), params);
}

// One simultaneous sweep of per-frame steps against frozen means.
double decoupled_sweep(const std::vector<SurfaceVoxel>& voxels, std::vector<Keyframe>& keyframes,
                       double voxel_size, const BaParams& params, std::vector<double>* first_norms,
                       std::string* message) {
  const std::vector<Vec3> means = voxel_means(observe_all(voxels, keyframes, voxel_size, params));
  const long n = static_cast<long>(keyframes.size());
  std::vector<Pose> updated(keyframes.size());
  std::vector<double> norms(keyframes.size(), 0.0);
  std::vector<int> failed(keyframes.size(), 0);

#pragma omp parallel for schedule(dynamic)
  for (long i = 1; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    Keyframe probe = keyframes[idx];
    updated[idx] = probe.pose;
    const FrameSystem sys = frame_system(voxels, means, probe, voxel_size, params, true);
    if (sys.count == 0) {
      failed[idx] = 1;
      continue;
    }
    const auto step = robust_solve<Mat6, Vec6>(sys.H, sys.b);
    if (!step) {
      failed[idx] = 1;
      continue;
    }
    norms[idx] = step->norm();
    if (norms[idx] == 0.0) continue;
    // Accept the step only if the frame's mean cost does not grow.
    Vec6 trial = *step;
    double mu = 1e-4 * sys.H.trace() / 6.0;
    for (int attempt = 0; attempt < 6; ++attempt, mu *= 10.0) {
      probe.pose = se3_exp(trial) * keyframes[idx].pose;
      const FrameSystem next = frame_system(voxels, means, probe, voxel_size, params, false);
      if (next.count > 0 && next.mean_cost() <= sys.mean_cost()) {
        updated[idx] = probe.pose;
        break;
      }
      Mat6 damped = sys.H;
      damped.diagonal().array() += mu;
      trial = damped.ldlt().solve(-sys.b);
    }
  }

  double max_norm = 0.0;
  for (std::size_t i = 1; i < keyframes.size(); ++i) {
    if (failed[i] != 0 && message->empty()) {
      *message = "keyframe " + std::to_string(keyframes[i].id) + ": singular or empty system";
    }
    keyframes[i].pose = updated[i];
    max_norm = std::max(max_norm, norms[i]);
  }
  if (first_norms != nullptr) *first_norms = norms;
  return max_norm;
}

// Linearization of the joint energy with means depending on all poses.
// Frame 0 is the gauge and has no parameters.
double coupled_step(const std::vector<SurfaceVoxel>& voxels, std::vector<Keyframe>& keyframes,
                    double voxel_size, const BaParams& params, std::vector<double>* first_norms,
                    std::string* message) {
  const std::size_t nf = keyframes.size();
  const auto dim = static_cast<Eigen::Index>(6 * (nf - 1));
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
  double energy = 0.0;

  struct Obs {
    std::size_t frame;
    Sample s;
  };
  std::vector<Obs> obs;
  for (const SurfaceVoxel& sv : voxels) {
    obs.clear();
    for (std::size_t i = 0; i < nf; ++i) {
      Sample s = sample_point(sv.surface_point(), sv.g_hat, keyframes[i], voxel_size, params, true);
      if (s.visible) obs.push_back({i, std::move(s)});
    }
    if (obs.size() < 2) continue;
    const double inv_n = 1.0 / static_cast<double>(obs.size());
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (const Obs& o : obs) mean += o.s.intensity[c];
      mean *= inv_n;
      // r_i = I_i - mean, d r_i / d xi_k = J_k (delta_ik - 1/N). With IRLS
      // weights w_i this gives, for k, l in the visible set,
      //   H_kl += (w_k delta_kl - (w_k + w_l)/N + W/N^2) J_k J_l^T
      //   b_k  += J_k (w_k r_k - sum_i w_i r_i / N).
      double w_sum = 0.0;
      double wr_sum = 0.0;
      std::vector<double> w(obs.size());
      std::vector<double> r(obs.size());
      for (std::size_t a = 0; a < obs.size(); ++a) {
        r[a] = obs[a].s.intensity[c] - mean;
        w[a] = robust_weight(r[a], params);
        w_sum += w[a];
        wr_sum += w[a] * r[a];
        energy += robust_loss(r[a], params);
      }
      for (std::size_t a = 0; a < obs.size(); ++a) {
        if (obs[a].frame == 0) continue;
        const auto ka = static_cast<Eigen::Index>(6 * (obs[a].frame - 1));
        const Vec6 Ja = obs[a].s.d_pose.row(c).transpose();
        b.segment<6>(ka) += Ja * (w[a] * r[a] - wr_sum * inv_n);
        for (std::size_t e = 0; e < obs.size(); ++e) {
          if (obs[e].frame == 0) continue;
          const auto ke = static_cast<Eigen::Index>(6 * (obs[e].frame - 1));
          const double coeff = (a == e ? w[a] : 0.0) - (w[a] + w[e]) * inv_n + w_sum * inv_n * inv_n;
          H.block<6, 6>(ka, ke).noalias() +=
              coeff * Ja * obs[e].s.d_pose.row(c);
        }
      }
    }
  }

  const auto step = robust_solve<Eigen::MatrixXd, Eigen::VectorXd>(H, b);
  if (!step) {
    *message = "singular coupled system";
    return 0.0;
  }
  if (first_norms != nullptr) {
    first_norms->assign(nf, 0.0);
    for (std::size_t i = 1; i < nf; ++i) {
      (*first_norms)[i] = step->segment<6>(static_cast<Eigen::Index>(6 * (i - 1))).norm();
    }
  }
  if (step->norm() == 0.0) return 0.0;

  const std::vector<Keyframe> original = keyframes;
  Eigen::VectorXd trial = *step;
  double mu = 1e-4 * H.trace() / static_cast<double>(dim);
  for (int attempt = 0; attempt < 6; ++attempt, mu *= 10.0) {
    for (std::size_t i = 1; i < nf; ++i) {
      keyframes[i].pose =
          se3_exp(trial.segment<6>(static_cast<Eigen::Index>(6 * (i - 1)))) * original[i].pose;
    }
    if (total_photometric(voxels, keyframes, voxel_size, params) <= energy) {
      double max_norm = 0.0;
      for (std::size_t i = 1; i < nf; ++i) {
        max_norm = std::max(max_norm, trial.segment<6>(static_cast<Eigen::Index>(6 * (i - 1))).norm());
      }
      return max_norm;
    }
    Eigen::MatrixXd damped = H;
    damped.diagonal().array() += mu;
    trial = damped.ldlt().solve(-b);
  }
  keyframes = original;
  return 0.0;
}

}  // namespace

VoxelObservation project_voxel_surface_point(const GradientSdfVolume& vol, const VoxelKey& key,
                                             const Keyframe& keyframe, std::size_t frame_index,
                                             const BaParams& params) {
  VoxelObservation obs;
  obs.key = key;
  obs.frame = frame_index;
  const GradVoxel* v = vol.find(key);
  if (v == nullptr || !(v->weight > 0.0f)) return obs;
  const auto g = normalized_gradient(*v);
  if (!g) return obs;
  const Vec3 p_s = vol.center(key) - static_cast<double>(v->dist) * *g;
  const Sample s = sample_point(p_s, *g, keyframe, vol.voxel_size(), params, false);
  obs.visible = s.visible;
  obs.uv = s.uv;
  obs.intensity = s.intensity;
  return obs;
}

double photometric_energy(const std::vector<std::vector<Vec3>>& intensities,
                          const BaParams& params) {
  double e = 0.0;
  for (const auto& samples : intensities) {
    if (samples.empty()) continue;
    const Vec3 m = mean_of(samples);
    for (const Vec3& s : samples) {
      for (int c = 0; c < 3; ++c) e += robust_loss(s[c] - m[c], params);
    }
  }
  return e;
}

double variance_energy(const std::vector<std::vector<Vec3>>& intensities) {
  double e = 0.0;
  for (const auto& samples : intensities) {
    if (samples.empty()) continue;
    const auto n = static_cast<double>(samples.size());
    // Population variance as E[x^2] - E[x]^2.
    Vec3 sum = Vec3::Zero();
    Vec3 sum_sq = Vec3::Zero();
    for (const Vec3& s : samples) {
      sum += s;
      sum_sq += s.cwiseProduct(s);
    }
    const Vec3 mean = sum / n;
    const Vec3 var = sum_sq / n - mean.cwiseProduct(mean);
    e += n * var.sum();
  }
  return e;
}

DistanceMap snapshot_distances(const GradientSdfVolume& vol) {
  DistanceMap out;
  out.reserve(vol.size());
  for (const auto& [key, voxel] : vol.voxels()) out.emplace(key, voxel.dist);
  return out;
}

std::vector<VoxelKey> surface_voxels(const GradientSdfVolume& vol, const BaParams& params) {
  const double band = params.surface_band * vol.voxel_size();
  std::vector<VoxelKey> keys;
  for (const auto& [key, voxel] : vol.voxels()) {
    if (!(voxel.weight > 0.0f) || std::abs(voxel.dist) > band) continue;
    if (!normalized_gradient(voxel)) continue;
    keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::vector<std::vector<VoxelObservation>> gather_observations(
    const GradientSdfVolume& vol, const std::vector<Keyframe>& keyframes, const BaParams& params) {
  const std::vector<VoxelKey> keys = surface_voxels(vol, params);
  std::vector<std::vector<VoxelObservation>> out(keys.size());
  const long n = static_cast<long>(keys.size());
#pragma omp parallel for schedule(static)
  for (long j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < keyframes.size(); ++i) {
      VoxelObservation o =
          project_voxel_surface_point(vol, keys[static_cast<std::size_t>(j)], keyframes[i], i, params);
      if (o.visible) out[static_cast<std::size_t>(j)].push_back(o);
    }
  }
  return out;
}

double ba_energy(const GradientSdfVolume& vol, const std::vector<Keyframe>& keyframes,
                 const BaParams& params, const DistanceMap* anchor) {
  const auto voxels = collect_surface(vol, params);
  double e = total_photometric(voxels, keyframes, vol.voxel_size(), params);
  if (anchor != nullptr) {
    const double lambda = params.regularizer_per_m2();
    for (const auto& [key, voxel] : vol.voxels()) {
      const auto it = anchor->find(key);
      if (it == anchor->end()) continue;
      const double d = voxel.dist - it->second;
      e += lambda * d * d;
    }
  }
  return e;
}

PoseOptimizationReport optimize_poses(const GradientSdfVolume& vol,
                                      std::vector<Keyframe>& keyframes, const BaParams& params) {
  params.validate();
  if (keyframes.size() < 2) throw std::invalid_argument("pose optimization needs two keyframes");
  const auto voxels = collect_surface(vol, params);
  const double vs = vol.voxel_size();

  PoseOptimizationReport report;
  report.energy_history.push_back(total_photometric(voxels, keyframes, vs, params));
  for (int it = 0; it < params.max_outer_iterations; ++it) {
    std::vector<double>* norms = it == 0 ? &report.first_update_norms : nullptr;
    const double max_norm =
        params.coupling == PoseCoupling::kDecoupled
            ? decoupled_sweep(voxels, keyframes, vs, params, norms, &report.message)
            : coupled_step(voxels, keyframes, vs, params, norms, &report.message);
    ++report.iterations;
    report.energy_history.push_back(total_photometric(voxels, keyframes, vs, params));
    if (max_norm < params.convergence_threshold) {
      report.converged = report.message.empty();
      break;
    }
  }
  if (report.first_update_norms.empty()) report.first_update_norms.assign(keyframes.size(), 0.0);
  return report;
}

DistanceOptimizationReport optimize_distances(GradientSdfVolume& vol,
                                              const std::vector<Keyframe>& keyframes,
                                              const BaParams& params, const DistanceMap& anchor) {
  params.validate();
  const auto voxels = collect_surface(vol, params);
  const double vs = vol.voxel_size();
  const double trunc = vol.truncation();
  const double lambda = params.regularizer_per_m2();

  // Energy of voxel j at distance d: robust deviation from its own mean plus
  // the anchor term. Returns nullopt when fewer than two frames see it.
  auto voxel_energy = [&](const SurfaceVoxel& sv, double d, double d0) -> std::optional<double> {
    std::vector<Vec3> seen;
    for (const Keyframe& kf : keyframes) {
      const Sample s = sample_point(sv.surface_point(d), sv.g_hat, kf, vs, params, false);
      if (s.visible) seen.push_back(s.intensity);
    }
    if (seen.size() < 2) return std::nullopt;
    return photometric_energy({seen}, params) + lambda * (d - d0) * (d - d0);
  };

  std::vector<double> result(voxels.size(), std::numeric_limits<double>::quiet_NaN());
  const long n = static_cast<long>(voxels.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (long jj = 0; jj < n; ++jj) {
    const SurfaceVoxel& sv = voxels[static_cast<std::size_t>(jj)];
    const auto it = anchor.find(sv.key);
    const double d0 = it != anchor.end() ? it->second : sv.psi;

    std::vector<Sample> obs;
    for (const Keyframe& kf : keyframes) {
      Sample s = sample_point(sv.surface_point(), sv.g_hat, kf, vs, params, true);
      if (s.visible) obs.push_back(std::move(s));
    }
    if (obs.size() < 2) continue;

    // The mean moves with psi too, so the exact residual derivative is the
    // per-frame derivative minus its average.
    const double inv_n = 1.0 / static_cast<double>(obs.size());
    double H = lambda;
    double b = lambda * (sv.psi - d0);
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      double mean_j = 0.0;
      for (const Sample& s : obs) {
        mean += s.intensity[c];
        mean_j += s.d_psi[c];
      }
      mean *= inv_n;
      mean_j *= inv_n;
      for (const Sample& s : obs) {
        const double r = s.intensity[c] - mean;
        const double J = s.d_psi[c] - mean_j;
        const double w = robust_weight(r, params);
        H += w * J * J;
        b += w * r * J;
      }
    }
    if (!(H > 0.0)) continue;
    const double e0 = *voxel_energy(sv, sv.psi, d0);
    double delta = -b / H;
    for (int attempt = 0; attempt < 5; ++attempt, delta *= 0.5) {
      const double d = std::clamp(sv.psi + delta, -trunc, trunc);
      const auto e = voxel_energy(sv, d, d0);
      if (e && *e <= e0) {
        result[static_cast<std::size_t>(jj)] = d;
        break;
      }
    }
    if (std::isnan(result[static_cast<std::size_t>(jj)])) result[static_cast<std::size_t>(jj)] = sv.psi;
  }

  DistanceOptimizationReport report;
  double change = 0.0;
  for (std::size_t j = 0; j < voxels.size(); ++j) {
    if (std::isnan(result[j])) {
      ++report.voxels_skipped;
      continue;
    }
    GradVoxel* v = vol.find_mutable(voxels[j].key);
    change += std::abs(result[j] - v->dist);
    v->dist = static_cast<float>(result[j]);
    ++report.voxels_updated;
  }
  if (report.voxels_updated > 0) report.mean_abs_change = change / static_cast<double>(report.voxels_updated);
  return report;
}

std::unordered_map<VoxelKey, Vec3, VoxelKeyHash> mean_voxel_color(
    const GradientSdfVolume& vol, const std::vector<Keyframe>& keyframes, const BaParams& params) {
  std::vector<VoxelKey> keys;
  for (const auto& [key, voxel] : vol.voxels()) {
    if (voxel.weight > 0.0f && normalized_gradient(voxel)) keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());
  std::vector<std::optional<Vec3>> colors(keys.size());
  const long n = static_cast<long>(keys.size());
#pragma omp parallel for schedule(static)
  for (long j = 0; j < n; ++j) {
    Vec3 sum = Vec3::Zero();
    int count = 0;
    for (std::size_t i = 0; i < keyframes.size(); ++i) {
      const auto o = project_voxel_surface_point(vol, keys[static_cast<std::size_t>(j)],
                                                 keyframes[i], i, params);
      if (!o.visible) continue;
      sum += o.intensity;
      ++count;
    }
    if (count > 0) colors[static_cast<std::size_t>(j)] = sum / count;
  }
  std::unordered_map<VoxelKey, Vec3, VoxelKeyHash> out;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    if (colors[j]) out.emplace(keys[j], *colors[j]);
  }
  return out;
}

BaReport run_bundle_adjustment(GradientSdfVolume& vol, std::vector<Keyframe>& keyframes,
                               const BaParams& params) {
  params.validate();
  const DistanceMap anchor = snapshot_distances(vol);
  BaReport report;
  report.initial_energy = ba_energy(vol, keyframes, params, &anchor);
  BaParams sweep = params;
  sweep.max_outer_iterations = 1;
  for (int it = 0; it < params.max_outer_iterations; ++it) {
    report.pose_sweeps.push_back(optimize_poses(vol, keyframes, sweep));
    if (params.scope == BaScope::kFull) {
      report.distance_sweeps.push_back(optimize_distances(vol, keyframes, params, anchor));
    }
    ++report.outer_iterations;
  }
  report.final_energy = ba_energy(vol, keyframes, params, &anchor);
  return report;
}

}  // namespace gsdf
