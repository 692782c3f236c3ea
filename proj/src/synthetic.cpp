// SPDX-License-Identifier: Apache-2.0

#include "gsdf/synthetic.hpp"

#include "gsdf/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace gsdf {

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 y = -(up - up.dot(z) * z);
  if (y.norm() < 1e-9) y = z.unitOrthogonal();
  y.normalize();
  const Vec3 x = y.cross(z);
  Pose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = eye;
  return pose;
}

SphereScene make_random_sphere_scene(std::uint64_t seed, const SceneOptions& options) {
  SphereScene scene;
  scene.seed = seed;
  scene.noise_enabled = options.noise_enabled;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius(options.radius_min, options.radius_max);
  std::uniform_real_distribution<double> coord(-0.5 * options.box_size, 0.5 * options.box_size);
  constexpr double kGap = 0.02;
  while (static_cast<int>(scene.spheres.size()) < options.sphere_count) {
    scene.spheres.clear();
    for (int attempt = 0; attempt < 10000 &&
                          static_cast<int>(scene.spheres.size()) < options.sphere_count;
         ++attempt) {
      Sphere s{Vec3(coord(rng), coord(rng), coord(rng)), radius(rng)};
      const bool overlaps = std::any_of(scene.spheres.begin(), scene.spheres.end(),
                                        [&](const Sphere& o) {
                                          return (o.center - s.center).norm() <
                                                 o.radius + s.radius + kGap;
                                        });
      if (!overlaps) scene.spheres.push_back(s);
    }
  }

  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  std::uniform_real_distribution<double> orbit(options.orbit_radius_min, options.orbit_radius_max);
  std::uniform_real_distribution<double> elevation(options.elevation_min_deg * std::numbers::pi / 180,
                                                   options.elevation_max_deg * std::numbers::pi / 180);
  const double sector = 2.0 * std::numbers::pi / std::max(options.pose_count, 1);
  for (int k = 0; k < options.pose_count; ++k) {
    const double az = k * sector + unit(rng) * sector;
    const double el = elevation(rng);
    const double r = orbit(rng);
    const Vec3 eye = r * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    const Vec3 target = 0.1 * Vec3(unit(rng), unit(rng), unit(rng));
    scene.trajectory.push_back(look_at(eye, target));
  }
  return scene;
}

namespace {

// Smallest positive ray parameter t with |o + t d - c| = r.
std::optional<double> intersect(const Sphere& s, const Vec3& origin, const Vec3& dir) {
  const Vec3 oc = origin - s.center;
  const double a = dir.squaredNorm();
  const double b = dir.dot(oc);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::nullopt;
  const double t = (-b - std::sqrt(disc)) / a;
  if (t <= 0.0) return std::nullopt;
  return t;
}

void check_camera_outside(const SphereScene& scene, const Pose& pose) {
  for (const Sphere& s : scene.spheres) {
    if ((pose.translation - s.center).norm() <= s.radius) {
      throw GeometryError("camera inside a sphere");
    }
  }
}

// Ray in world coordinates, parameterized so that t equals camera depth.
std::optional<std::pair<double, std::size_t>> cast(const SphereScene& scene, const Pose& pose,
                                                   const Intrinsics& intr, int u, int v) {
  const Vec3 ray_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  const Vec3 dir = pose.rotation * ray_cam;
  std::optional<std::pair<double, std::size_t>> best;
  for (std::size_t i = 0; i < scene.spheres.size(); ++i) {
    const auto t = intersect(scene.spheres[i], pose.translation, dir);
    if (t && (!best || *t < best->first)) best = std::make_pair(*t, i);
  }
  return best;
}

}  // namespace

DepthFrame render_sphere_depth(const SphereScene& scene, const Pose& pose, const Intrinsics& intr,
                               std::uint64_t frame_index) {
  check_camera_outside(scene, pose);
  DepthFrame frame(intr, static_cast<double>(frame_index));
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const auto hit = cast(scene, pose, intr, u, v);
      if (hit) frame.values(u, v) = static_cast<float>(hit->first);
    }
  }
  if (scene.noise_enabled) {
    std::seed_seq seq{static_cast<std::uint32_t>(scene.seed), static_cast<std::uint32_t>(scene.seed >> 32),
                      static_cast<std::uint32_t>(frame_index),
                      static_cast<std::uint32_t>(frame_index >> 32), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (float& d : frame.values.data()) {
      if (d <= 0.0f) continue;
      const double noisy = d + axial_noise_sigma(d) * normal(rng);
      d = noisy > 0.0 ? static_cast<float>(noisy) : 0.0f;
    }
  }
  return frame;
}

Vec3 surface_color(const Vec3& p) {
  constexpr double tau = 2.0 * std::numbers::pi;
  return {0.5 + 0.3 * std::sin(tau * p.x() / 0.23) * std::cos(tau * p.y() / 0.31),
          0.5 + 0.3 * std::sin(tau * (p.y() + p.z()) / 0.27 + 1.0),
          0.5 + 0.3 * std::cos(tau * (p.x() - p.z()) / 0.19) * std::sin(tau * p.y() / 0.41 + 0.5)};
}

ColorFrame render_sphere_color(const SphereScene& scene, const Pose& pose, const Intrinsics& intr) {
  check_camera_outside(scene, pose);
  ColorFrame frame(intr);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const auto hit = cast(scene, pose, intr, u, v);
      if (!hit) continue;
      const Vec3 p = pose * backproject(intr, Vec2(u, v), hit->first);
      const Vec3 rgb = surface_color(p);
      for (int c = 0; c < 3; ++c) frame.channels[static_cast<std::size_t>(c)](u, v) = static_cast<float>(rgb[c]);
    }
  }
  return frame;
}

Vec3 gt_sphere_gradient(const Vec3& p, const Vec3& center) {
  const Vec3 d = p - center;
  const double n = d.norm();
  if (!(n > 0.0)) throw std::domain_error("gradient undefined at the sphere center");
  return d / n;
}

std::optional<std::size_t> nearest_sphere(const SphereScene& scene, const Vec3& p) {
  std::optional<std::size_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.spheres.size(); ++i) {
    const double d = std::abs((p - scene.spheres[i].center).norm() - scene.spheres[i].radius);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

std::optional<Vec3> finite_difference_gradient(const GradientSdfVolume& vol, const VoxelKey& key,
                                               FdScheme scheme) {
  auto dist = [&](const VoxelKey& k) -> std::optional<double> {
    const GradVoxel* v = vol.find(k);
    if (v == nullptr || !(v->weight > 0.0f)) return std::nullopt;
    return static_cast<double>(v->dist);
  };
  const auto here = dist(key);
  if (!here) return std::nullopt;
  Vec3 g;
  for (int axis = 0; axis < 3; ++axis) {
    VoxelKey e{0, 0, 0};
    (axis == 0 ? e.x : axis == 1 ? e.y : e.z) = 1;
    const VoxelKey minus{-e.x, -e.y, -e.z};
    switch (scheme) {
      case FdScheme::kForward: {
        const auto next = dist(key + e);
        if (!next) return std::nullopt;
        g[axis] = (*next - *here) / vol.voxel_size();
        break;
      }
      case FdScheme::kBackward: {
        const auto prev = dist(key + minus);
        if (!prev) return std::nullopt;
        g[axis] = (*here - *prev) / vol.voxel_size();
        break;
      }
      case FdScheme::kCentral: {
        const auto next = dist(key + e);
        const auto prev = dist(key + minus);
        if (!next || !prev) return std::nullopt;
        g[axis] = (*next - *prev) / (2.0 * vol.voxel_size());
        break;
      }
    }
  }
  return g;
}

std::string_view to_string(GradientSource source) {
  switch (source) {
    case GradientSource::kStored: return "stored";
    case GradientSource::kForward: return "forward";
    case GradientSource::kBackward: return "backward";
    case GradientSource::kCentral: return "central";
  }
  return "unknown";
}

double angle_between_deg(const Vec3& a, const Vec3& b) {
  // atan2 form stays accurate for nearly parallel vectors.
  const double angle = std::atan2(a.cross(b).norm(), a.dot(b));
  return angle * 180.0 / std::numbers::pi;
}

namespace {

struct VoxelDeviation {
  double band;  // |psi| / voxel_size
  std::array<double, kGradientSourceCount> angle;
};

SchemeStats summarize(std::vector<double>& values) {
  SchemeStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  const std::size_t n = values.size();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = values[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::optional<Vec3> estimate(const GradientSdfVolume& vol, const VoxelKey& key,
                             const GradVoxel& voxel, GradientSource source) {
  switch (source) {
    case GradientSource::kStored: return normalized_gradient(voxel);
    case GradientSource::kForward: return finite_difference_gradient(vol, key, FdScheme::kForward);
    case GradientSource::kBackward: return finite_difference_gradient(vol, key, FdScheme::kBackward);
    case GradientSource::kCentral: return finite_difference_gradient(vol, key, FdScheme::kCentral);
  }
  return std::nullopt;
}

// Ground-truth outward direction, or nullopt in the excluded medial regions.
std::optional<Vec3> reference_direction(const SphereScene& scene, const Vec3& p, double voxel_size) {
  double first = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t i = 0; i < scene.spheres.size(); ++i) {
    const double d = std::abs((p - scene.spheres[i].center).norm() - scene.spheres[i].radius);
    if (d < first) {
      second = first;
      first = d;
      best = i;
    } else if (d < second) {
      second = d;
    }
  }
  if (scene.spheres.empty() || second - first <= voxel_size) return std::nullopt;
  const Sphere& s = scene.spheres[best];
  if ((p - s.center).norm() <= voxel_size) return std::nullopt;
  return gt_sphere_gradient(p, s.center);
}

}  // namespace

DeviationStats gradient_deviation_stats(const GradientSdfVolume& vol, const SphereScene& scene,
                                        int max_band) {
  std::vector<VoxelKey> keys;
  keys.reserve(vol.size());
  for (const auto& [key, voxel] : vol.voxels()) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  std::vector<VoxelDeviation> samples;
  for (const VoxelKey& key : keys) {
    const GradVoxel& voxel = vol.voxels().at(key);
    if (!(voxel.weight > 0.0f)) continue;
    const double band = std::abs(voxel.dist) / vol.voxel_size();
    if (band > max_band) continue;
    const auto gt = reference_direction(scene, vol.center(key), vol.voxel_size());
    if (!gt) continue;
    VoxelDeviation dev{band, {}};
    bool complete = true;
    for (std::size_t s = 0; s < kGradientSourceCount && complete; ++s) {
      const auto g = estimate(vol, key, voxel, static_cast<GradientSource>(s));
      if (!g || !(g->norm() > kGradientEpsilon)) {
        complete = false;
        break;
      }
      // SDF gradients point into objects; the reference points outward.
      dev.angle[s] = angle_between_deg(-*g, *gt);
    }
    if (complete) samples.push_back(dev);
  }

  DeviationStats stats;
  for (int x = 1; x <= max_band; ++x) {
    ThresholdRow row;
    row.threshold = x;
    for (std::size_t s = 0; s < kGradientSourceCount; ++s) {
      std::vector<double> values;
      for (const VoxelDeviation& d : samples) {
        if (d.band <= x) values.push_back(d.angle[s]);
      }
      row.sources[s] = summarize(values);
    }
    stats.rows.push_back(row);
  }
  return stats;
}

GradientStudy run_gradient_study(const GradientStudyConfig& config) {
  SceneOptions options;
  options.sphere_count = config.sphere_count;
  options.pose_count = config.pose_count;
  options.noise_enabled = config.noise_enabled;

  GradientStudy study{make_random_sphere_scene(config.seed, options),
                      GradientSdfVolume(config.voxel_size, config.trunc_factor * config.voxel_size),
                      {}};
  FusionParams fusion = config.fusion;
  fusion.voxel_size = config.voxel_size;
  fusion.trunc_factor = config.trunc_factor;

  for (std::size_t k = 0; k < study.scene.trajectory.size(); ++k) {
    const Pose& pose = study.scene.trajectory[k];
    const DepthFrame depth = render_sphere_depth(study.scene, pose, config.intrinsics, k);
    integrate_frame(study.volume, depth, pose, fusion);
  }
  study.stats = gradient_deviation_stats(study.volume, study.scene, config.max_band);
  return study;
}

void write_stats_csv(const DeviationStats& stats, std::ostream& out) {
  out << "threshold,scheme,mean,median,p95,count\n";
  out << std::fixed << std::setprecision(4);
  for (const ThresholdRow& row : stats.rows) {
    for (std::size_t s = 0; s < kGradientSourceCount; ++s) {
      const SchemeStats& st = row.sources[s];
      out << row.threshold << ',' << to_string(static_cast<GradientSource>(s)) << ',' << st.mean
          << ',' << st.median << ',' << st.p95 << ',' << st.count << '\n';
    }
  }
}

void write_stats_plot_data(const DeviationStats& stats, std::ostream& out) {
  out << "# threshold stored_mean stored_median stored_p95 central_mean central_median "
         "central_p95\n";
  out << std::fixed << std::setprecision(4);
  for (const ThresholdRow& row : stats.rows) {
    const SchemeStats& st = row[GradientSource::kStored];
    const SchemeStats& ce = row[GradientSource::kCentral];
    out << row.threshold << ' ' << st.mean << ' ' << st.median << ' ' << st.p95 << ' ' << ce.mean
        << ' ' << ce.median << ' ' << ce.p95 << '\n';
  }
}

std::vector<std::filesystem::path> write_gradient_slices(const GradientSdfVolume& vol,
                                                         const SphereScene& scene,
                                                         std::int32_t slice_z,
                                                         const std::filesystem::path& dir) {
  std::int32_t x0 = std::numeric_limits<std::int32_t>::max(), y0 = x0;
  std::int32_t x1 = std::numeric_limits<std::int32_t>::min(), y1 = x1;
  for (const auto& [key, voxel] : vol.voxels()) {
    if (key.z != slice_z) continue;
    x0 = std::min(x0, key.x);
    x1 = std::max(x1, key.x);
    y0 = std::min(y0, key.y);
    y1 = std::max(y1, key.y);
  }
  std::vector<std::filesystem::path> written;
  if (x0 > x1) return written;
  std::filesystem::create_directories(dir);

  const int w = x1 - x0 + 1;
  const int h = y1 - y0 + 1;
  // Index 0 is the ground truth, then one image per gradient source.
  std::array<std::vector<std::uint8_t>, kGradientSourceCount + 1> images;
  for (auto& img : images) img.assign(static_cast<std::size_t>(w) * h * 3, 0);

  auto paint = [&](std::vector<std::uint8_t>& img, int px, int py, const Vec3& n) {
    const std::size_t idx = (static_cast<std::size_t>(py) * w + px) * 3;
    for (int c = 0; c < 3; ++c) {
      img[idx + c] = static_cast<std::uint8_t>(std::lround(std::clamp((n[c] + 1.0) * 0.5, 0.0, 1.0) * 255.0));
    }
  };

  for (const auto& [key, voxel] : vol.voxels()) {
    if (key.z != slice_z || !(voxel.weight > 0.0f)) continue;
    if (std::abs(voxel.dist) >= vol.truncation()) continue;
    const int px = key.x - x0;
    const int py = y1 - key.y;  // image rows grow downward
    if (const auto gt = nearest_sphere(scene, vol.center(key))) {
      const Vec3 c = scene.spheres[*gt].center;
      if ((vol.center(key) - c).norm() > 0.0) {
        // Shown as SDF gradient, i.e. pointing into the object.
        paint(images[0], px, py, -gt_sphere_gradient(vol.center(key), c));
      }
    }
    for (std::size_t s = 0; s < kGradientSourceCount; ++s) {
      const auto g = estimate(vol, key, voxel, static_cast<GradientSource>(s));
      if (g && g->norm() > kGradientEpsilon) paint(images[s + 1], px, py, g->normalized());
    }
  }

  const std::array<std::string, kGradientSourceCount + 1> names = {
      "ground_truth", std::string(to_string(GradientSource::kStored)),
      std::string(to_string(GradientSource::kForward)),
      std::string(to_string(GradientSource::kBackward)),
      std::string(to_string(GradientSource::kCentral))};
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto path = dir / ("slice_z" + std::to_string(slice_z) + "_" + names[i] + ".png");
    write_png_rgb8(path, w, h, images[i]);
    written.push_back(path);
  }
  return written;
}

}  // namespace gsdf
