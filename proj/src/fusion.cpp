// SPDX-License-Identifier: Apache-2.0

#include "gsdf/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace gsdf {

void FusionParams::validate() const {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel_size must be positive");
  if (!(trunc_factor >= 1.0)) throw std::invalid_argument("trunc_factor must be >= 1");
  if (!(depth_cutoff > 0.0)) throw std::invalid_argument("depth_cutoff must be positive");
  if (!(normal_angle_max_deg > 0.0 && normal_angle_max_deg < 90.0)) {
    throw std::invalid_argument("normal_angle_max must lie in (0, 90) degrees");
  }
  if (!(step() <= voxel_size)) throw std::invalid_argument("ray_step must not exceed voxel_size");
  if (normal_radius < 1) throw std::invalid_argument("normal_radius must be >= 1");
}

NormalMap::NormalMap(int width, int height)
    : normals(width, height, Eigen::Vector3f::Constant(std::numeric_limits<float>::quiet_NaN())) {}

NormalMap estimate_normals(const DepthFrame& depth, int radius) {
  if (radius < 1) throw std::invalid_argument("normal radius must be >= 1");
  const Intrinsics& intr = depth.intrinsics;
  const int r = radius;
  NormalMap out(intr.width, intr.height);
  auto point = [&](int u, int v) {
    return backproject(intr, Vec2(u, v), static_cast<double>(depth.values(u, v)));
  };

#pragma omp parallel for schedule(static)
  for (int v = r; v < intr.height - r; ++v) {
    for (int u = r; u < intr.width - r; ++u) {
      if (!depth.valid(u, v) || !depth.valid(u - r, v) || !depth.valid(u + r, v) ||
          !depth.valid(u, v - r) || !depth.valid(u, v + r)) {
        continue;
      }
      const Vec3 du = point(u + r, v) - point(u - r, v);
      const Vec3 dv = point(u, v + r) - point(u, v - r);
      Vec3 n = du.cross(dv);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      if (n.dot(point(u, v)) > 0.0) n = -n;
      out.normals(u, v) = n.cast<float>();
    }
  }
  return out;
}

double fusion_weight(double d, double truncation) {
  if (std::abs(d) > truncation) throw std::domain_error("distance outside truncation band");
  if (d <= 0.0) return 1.0;
  return 1.0 - d / truncation;
}

namespace {

struct Candidate {
  double lateral_sq;
  std::size_t pixel;
  double dist;
  Vec3 normal_in;
};

}  // namespace

IntegrationStats integrate_frame(GradientSdfVolume& vol, const DepthFrame& depth,
                                 const NormalMap& normals, const Pose& pose,
                                 const FusionParams& params) {
  params.validate();
  const Intrinsics& intr = depth.intrinsics;
  if (normals.width() != intr.width || normals.height() != intr.height) {
    throw std::invalid_argument("depth and normal map sizes differ");
  }
  if (std::abs(vol.voxel_size() - params.voxel_size) > 1e-12 * params.voxel_size) {
    throw std::invalid_argument("volume voxel size differs from fusion parameters");
  }

  const double trunc = vol.truncation();
  const double step = params.step();
  const int steps = static_cast<int>(std::floor(2.0 * trunc / step + 1e-6));
  const double cos_min = std::cos(params.normal_angle_max_deg * std::numbers::pi / 180.0);
  const double band_slack = trunc * (1.0 + 1e-9);

  IntegrationStats stats;
  std::unordered_map<VoxelKey, Candidate, VoxelKeyHash> best;
  best.reserve(static_cast<std::size_t>(intr.width) * intr.height);

  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      if (!depth.valid(u, v) || !normals.valid(u, v)) continue;
      const double D = depth.values(u, v);
      if (D > params.depth_cutoff) continue;

      const Vec3 ray(( u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const Vec3 ray_dir = ray.normalized();
      const Vec3 n_cam = normals.normals(u, v).cast<double>();
      if (-n_cam.dot(ray_dir) < cos_min) continue;

      ++stats.pixels_used;
      const Vec3 surface_cam = ray * D;
      const Vec3 n_in_world = -(pose.rotation * n_cam);
      const std::size_t pixel = static_cast<std::size_t>(v) * intr.width + u;

      for (int k = 0; k <= steps; ++k) {
        const double z = D - trunc + k * step;
        if (z <= 0.0) continue;
        const VoxelKey key = world_to_key(pose * (ray * z), vol.voxel_size());
        const Vec3 center_cam = pose.to_local(vol.center(key));
        if (center_cam.z() <= 0.0) continue;

        double d = 0.0;
        switch (params.distance_model) {
          case DistanceModel::kProjective:
            d = center_cam.z() - D;
            break;
          case DistanceModel::kPointToPlane:
            d = -n_cam.dot(center_cam - surface_cam);
            break;
        }
        if (std::abs(d) > band_slack) continue;
        d = std::clamp(d, -trunc, trunc);

        const double along = center_cam.dot(ray_dir);
        const double lateral_sq = center_cam.squaredNorm() - along * along;
        auto [it, inserted] = best.try_emplace(key, Candidate{lateral_sq, pixel, d, n_in_world});
        if (!inserted) {
          Candidate& c = it->second;
          if (lateral_sq < c.lateral_sq || (lateral_sq == c.lateral_sq && pixel < c.pixel)) {
            c = Candidate{lateral_sq, pixel, d, n_in_world};
          }
        }
      }
    }
  }

  if (params.distance_model == DistanceModel::kPointToPlane) {
    // The ray through the voxel center meets the surface off the voxel's
    // normal at oblique views, and the tangent plane there misses the
    // curvature in between. Re-measure once from the pixel that sees the
    // foot point v + d * n, which lies on the surface to first order. A
    // voxel whose foot point is not seen gets no update from this frame.
    auto remeasure = [&](const VoxelKey& key, Candidate& c) {
      const Vec3 center_cam = pose.to_local(vol.center(key));
      const Vec3 foot = center_cam - c.dist * (pose.rotation.transpose() * c.normal_in);
      if (foot.z() <= 0.0) return false;
      const auto u = static_cast<int>(std::lround(intr.fx * foot.x() / foot.z() + intr.cx));
      const auto v = static_cast<int>(std::lround(intr.fy * foot.y() / foot.z() + intr.cy));
      if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) return false;
      if (!depth.valid(u, v) || !normals.valid(u, v)) return false;
      const double D = depth.values(u, v);
      if (D > params.depth_cutoff) return false;
      const Vec3 ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const Vec3 n_cam = normals.normals(u, v).cast<double>();
      if (-n_cam.dot(ray.normalized()) < cos_min) return false;
      const double d = -n_cam.dot(center_cam - ray * D);
      if (std::abs(d) > band_slack) return false;
      c.dist = std::clamp(d, -trunc, trunc);
      c.normal_in = -(pose.rotation * n_cam);
      return true;
    };
    std::erase_if(best, [&](auto& entry) { return !remeasure(entry.first, entry.second); });
  }

  for (const auto& [key, c] : best) {
    // Rounded to float first so that repeated identical observations add
    // exactly representable weights.
    const double w = static_cast<float>(fusion_weight(c.dist, trunc));
    if (!(w > 0.0)) continue;
    GradVoxel* voxel = vol.find_mutable(key);
    if (voxel == nullptr) {
      voxel = &vol.get_or_insert(key);
      ++stats.voxels_allocated;
    }
    const double W = voxel->weight;
    voxel->dist = static_cast<float>((W * voxel->dist + w * c.dist) / (W + w));
    voxel->weight = static_cast<float>(W + w);
    voxel->grad += (w * c.normal_in).cast<float>();
    ++stats.voxels_updated;
  }
  return stats;
}

IntegrationStats integrate_frame(GradientSdfVolume& vol, const DepthFrame& depth,
                                 const Pose& pose, const FusionParams& params) {
  return integrate_frame(vol, depth, estimate_normals(depth, params.normal_radius), pose, params);
}

}  // namespace gsdf
