// SPDX-License-Identifier: Apache-2.0
//
// Scene builders and analytic oracles shared by the unit and acceptance tests.

#pragma once

#include "gsdf/dataset_io.hpp"
#include "gsdf/extraction.hpp"
#include "gsdf/fusion.hpp"
#include "gsdf/geometry.hpp"
#include "gsdf/photometric_ba.hpp"
#include "gsdf/synthetic.hpp"
#include "gsdf/volume.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>

namespace gsdf::testing {

inline Intrinsics small_intrinsics(int width = 160, int height = 120, double f = 131.25) {
  Intrinsics k;
  k.fx = f;
  k.fy = f;
  k.cx = (width - 1) / 2.0;
  k.cy = (height - 1) / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

/// Depth of the plane {x : n.x = offset} seen from `pose` (camera to world);
/// 0 where the ray misses or hits behind the camera.
inline DepthFrame render_plane_depth(const Vec3& n, double offset, const Pose& pose,
                                     const Intrinsics& intr) {
  DepthFrame frame(intr);
  const Vec3 n_cam = pose.rotation.transpose() * n;
  const double off_cam = offset - n.dot(pose.translation);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Vec3 ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const double denom = n_cam.dot(ray);
      if (std::abs(denom) < 1e-12) continue;
      const double z = off_cam / denom;
      if (z > 0.0) frame.values(u, v) = static_cast<float>(z);
    }
  }
  return frame;
}

/// Color image of the plane {x : n.x = offset} with a world-space texture.
inline ColorFrame render_plane_color(const Vec3& n, double offset, const Pose& pose,
                                     const Intrinsics& intr,
                                     const std::function<Vec3(const Vec3&)>& texture) {
  ColorFrame frame(intr);
  const DepthFrame depth = render_plane_depth(n, offset, pose, intr);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      if (!depth.valid(u, v)) continue;
      const Vec3 p = pose * backproject(intr, Vec2(u, v), depth.values(u, v));
      const Vec3 c = texture(p);
      for (int ch = 0; ch < 3; ++ch) frame.channels[static_cast<std::size_t>(ch)](u, v) = static_cast<float>(c[ch]);
    }
  }
  return frame;
}

/// Dense analytic field over the key box [lo, hi]^3 with unit weight and the
/// exact SDF gradient supplied by `grad`.
inline GradientSdfVolume analytic_volume(double voxel_size, double truncation, int lo, int hi,
                                         const std::function<double(const Vec3&)>& sdf,
                                         const std::function<Vec3(const Vec3&)>& grad,
                                         bool only_band = true) {
  GradientSdfVolume vol(voxel_size, truncation);
  for (int z = lo; z <= hi; ++z) {
    for (int y = lo; y <= hi; ++y) {
      for (int x = lo; x <= hi; ++x) {
        const VoxelKey key{x, y, z};
        const Vec3 p = vol.center(key);
        const double d = sdf(p);
        if (only_band && std::abs(d) > truncation) continue;
        GradVoxel& v = vol.get_or_insert(key);
        v.dist = static_cast<float>(d);
        v.weight = 1.0f;
        v.grad = grad(p).cast<float>();
      }
    }
  }
  return vol;
}

/// Largest distance from a surfel inside `region` to its nearest distinct
/// neighbor, searched through a hash grid of cell size `cell_size`; infinity
/// for an isolated surfel. Neighbors farther than cell_size are not found.
template <typename Region>
double max_neighbor_spacing(const SurfelCloud& cloud, double cell_size, Region region,
                            std::size_t* measured = nullptr) {
  using Cell = std::array<long, 3>;
  auto cell = [&](const Vec3& p) {
    return Cell{std::lround(std::floor(p.x() / cell_size)), std::lround(std::floor(p.y() / cell_size)),
                std::lround(std::floor(p.z() / cell_size))};
  };
  std::map<Cell, std::vector<Vec3>> grid;
  for (const Surfel& s : cloud) grid[cell(s.position)].push_back(s.position);
  double spacing = 0.0;
  std::size_t count = 0;
  for (const Surfel& s : cloud) {
    if (!region(s.position)) continue;
    const Cell c0 = cell(s.position);
    double nearest = std::numeric_limits<double>::infinity();
    for (long dz = -1; dz <= 1; ++dz)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const auto it = grid.find({c0[0] + dx, c0[1] + dy, c0[2] + dz});
          if (it == grid.end()) continue;
          for (const Vec3& q : it->second) {
            const double d = (q - s.position).norm();
            if (d > 1e-6 * cell_size) nearest = std::min(nearest, d);
          }
        }
    spacing = std::max(spacing, nearest);
    ++count;
  }
  if (measured != nullptr) *measured = count;
  return spacing;
}

/// Sphere SDF in this library's convention: positive inside, negative outside.
inline double sphere_sdf(const Vec3& p, const Vec3& c, double r) { return r - (p - c).norm(); }

/// Cameras spread over a sphere of radius `dist` around `target`, looking at it
/// (Fibonacci lattice, deterministic).
inline std::vector<Pose> ring_of_views(const Vec3& target, double dist, int count) {
  std::vector<Pose> poses;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(1.0 - y * y);
    const double phi = golden * i;
    const Vec3 dir(r * std::cos(phi), r * std::sin(phi), y);
    Vec3 up = Vec3::UnitZ();
    if (std::abs(dir.dot(up)) > 0.95) up = Vec3::UnitX();
    poses.push_back(look_at(target + dist * dir, target, up));
  }
  return poses;
}

/// Writes a TUM-format directory for a sphere scene: depth/, rgb/, depth.txt,
/// rgb.txt, groundtruth.txt and camera.txt. Color stamps trail depth by 5 ms.
inline void write_sphere_sequence(const std::filesystem::path& dir, const SphereScene& scene,
                                  const Intrinsics& intr, int frames, double fps = 30.0) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "rgb");
  std::ofstream depth_txt(dir / "depth.txt"), rgb_txt(dir / "rgb.txt"), cam(dir / "camera.txt");
  depth_txt << "# depth maps\n";
  rgb_txt << "# color images\n";
  cam << "fx=" << intr.fx << "\nfy=" << intr.fy << "\ncx=" << intr.cx << "\ncy=" << intr.cy
      << "\nwidth=" << intr.width << "\nheight=" << intr.height << "\ndepth_scale=5000\n";
  Trajectory gt;
  for (int i = 0; i < frames; ++i) {
    const double t = 1.0 + i / fps;
    const Pose& pose = scene.trajectory.at(static_cast<std::size_t>(i));
    char depth_name[64], rgb_name[64];
    std::snprintf(depth_name, sizeof(depth_name), "%.6f.png", t);
    std::snprintf(rgb_name, sizeof(rgb_name), "%.6f.png", t + 0.005);
    write_depth_png(dir / "depth" / depth_name,
                    render_sphere_depth(scene, pose, intr, static_cast<std::uint64_t>(i)));
    write_color_png(dir / "rgb" / rgb_name, render_sphere_color(scene, pose, intr));
    depth_txt << std::fixed << std::setprecision(6) << t << " depth/" << depth_name << '\n';
    rgb_txt << std::fixed << std::setprecision(6) << t + 0.005 << " rgb/" << rgb_name << '\n';
    gt.push_back({t, pose});
  }
  write_trajectory(gt, dir / "groundtruth.txt");
}

/// A smooth, camera-trajectory-style path: small orbit arc around the scene
/// with the given step per frame (radians).
inline std::vector<Pose> orbit_arc(const Vec3& target, double radius, double elevation,
                                   double start, double step, int count) {
  std::vector<Pose> poses;
  for (int i = 0; i < count; ++i) {
    const double az = start + i * step;
    const Vec3 eye = target + radius * Vec3(std::cos(elevation) * std::cos(az),
                                            std::cos(elevation) * std::sin(az), std::sin(elevation));
    poses.push_back(look_at(eye, target));
  }
  return poses;
}

struct KeyframeScene {
  GradientSdfVolume volume{0.01, 0.05};
  std::vector<Keyframe> keyframes;
};

/// Ten noise-free textured keyframes on an orbit arc around a random sphere
/// scene, with depth attached, fused at 1 cm into the returned volume.
inline KeyframeScene make_keyframe_scene(std::uint64_t seed = 3) {
  SceneOptions opt;
  opt.noise_enabled = false;
  SphereScene scene = make_random_sphere_scene(seed, opt);
  scene.trajectory = orbit_arc(Vec3::Zero(), 1.7, 0.3, 0.4, 0.06, 10);
  const Intrinsics intr = Intrinsics{}.scaled(2);
  FusionParams fparams;
  fparams.voxel_size = 0.01;
  KeyframeScene out;
  out.volume = GradientSdfVolume(fparams.voxel_size, fparams.truncation());
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    Keyframe kf;
    kf.id = i;
    kf.pose = scene.trajectory[i];
    kf.depth = render_sphere_depth(scene, kf.pose, intr, i);
    kf.color = render_sphere_color(scene, kf.pose, intr);
    integrate_frame(out.volume, *kf.depth, kf.pose, fparams);
    out.keyframes.push_back(std::move(kf));
  }
  return out;
}

/// Perturbs every keyframe but the first: Gaussian translation (sigma_t per
/// axis, meters) and a rotation about the camera center (sigma_r per axis,
/// radians).
inline std::vector<Keyframe> perturb_keyframes(std::vector<Keyframe> keyframes, std::uint64_t seed,
                                               double sigma_t, double sigma_r) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> trans(0.0, sigma_t), rot(0.0, sigma_r);
  for (std::size_t i = 1; i < keyframes.size(); ++i) {
    const Vec3 t(trans(rng), trans(rng), trans(rng));
    const Vec3 w(rot(rng), rot(rng), rot(rng));
    Vec6 xi = Vec6::Zero();
    xi.tail<3>() = w;
    keyframes[i].pose.rotation = se3_exp(xi).rotation * keyframes[i].pose.rotation;
    keyframes[i].pose.translation += t;
  }
  return keyframes;
}

inline double translation_rmse_cm(const std::vector<Keyframe>& a, const std::vector<Keyframe>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i].pose.translation - b[i].pose.translation).squaredNorm();
  return 100.0 * std::sqrt(sum / static_cast<double>(a.size()));
}

}  // namespace gsdf::testing
