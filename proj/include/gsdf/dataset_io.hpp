// SPDX-License-Identifier: Apache-2.0
//
// TUM RGB-D style data: trajectory text files, depth/color PNGs, sequence
// directories with rgb.txt/depth.txt/groundtruth.txt, timestamp association
// and the absolute trajectory error.

#pragma once

#include "gsdf/geometry.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gsdf {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

using Trajectory = std::vector<TimedPose>;

/// "timestamp tx ty tz qx qy qz qw" with 6 decimals; the quaternion is
/// normalized with qw >= 0.
std::string format_pose_line(const TimedPose& p);
void write_trajectory(const Trajectory& traj, std::ostream& out);
void write_trajectory(const Trajectory& traj, const std::filesystem::path& path);
/// Skips blank and '#' lines; throws DatasetError naming the line number of
/// any unparsable line or non-increasing timestamp.
Trajectory read_trajectory(std::istream& in);
Trajectory read_trajectory(const std::filesystem::path& path);

/// Greedy one-to-one association: candidate pairs with |a - b| <= max_gap are
/// taken in order of increasing gap. Result is sorted by the index into a.
std::vector<std::pair<std::size_t, std::size_t>> associate_timestamps(
    const std::vector<double>& a, const std::vector<double>& b, double max_gap);

/// Rotation and translation minimizing sum |R src_i + t - dst_i|^2 (no
/// scale). Throws DatasetError for fewer than two pairs.
Pose align_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

struct AteResult {
  double rmse_cm = 0.0;
  std::size_t pairs = 0;
  Pose alignment;  // maps estimated positions onto ground truth
};

/// Associates the trajectories by timestamp, aligns estimated to ground-truth
/// positions rigidly and returns the RMSE of the residual position errors.
AteResult absolute_trajectory_error(const Trajectory& estimated, const Trajectory& ground_truth,
                                    double max_gap = 0.02);
inline double ate_rmse_cm(const Trajectory& estimated, const Trajectory& ground_truth,
                          double max_gap = 0.02) {
  return absolute_trajectory_error(estimated, ground_truth, max_gap).rmse_cm;
}

inline constexpr double kTumDepthScale = 5000.0;  // raw units per meter

struct CameraConfig {
  Intrinsics intrinsics{};
  double depth_scale = kTumDepthScale;
};

/// key=value lines with keys fx, fy, cx, cy, width, height, depth_scale;
/// '#' starts a comment. Missing keys keep their defaults.
CameraConfig read_camera_config(const std::filesystem::path& path);

/// 16-bit gray PNG, depth = raw / depth_scale, 0 marks invalid pixels.
DepthFrame read_depth_png(const std::filesystem::path& path, const Intrinsics& intr,
                          double depth_scale = kTumDepthScale);
void write_depth_png(const std::filesystem::path& path, const DepthFrame& depth,
                     double depth_scale = kTumDepthScale);
/// 8-bit gray/RGB(A) PNG normalized to [0, 1].
ColorFrame read_color_png(const std::filesystem::path& path, const Intrinsics& intr);
void write_color_png(const std::filesystem::path& path, const ColorFrame& color);

struct SequenceEntry {
  double depth_timestamp = 0.0;
  std::filesystem::path depth_path;
  std::optional<double> color_timestamp;
  std::optional<std::filesystem::path> color_path;
};

struct SequenceFrame {
  DepthFrame depth;
  std::optional<ColorFrame> color;
};

/// Index over a TUM-format directory; images are decoded on demand so long
/// sequences never sit in memory at once.
class TumSequence {
 public:
  /// Reads depth.txt (required), rgb.txt and groundtruth.txt (optional).
  /// Intrinsics come from `config`, else from camera.txt in the directory,
  /// else the TUM defaults. Throws DatasetError for a missing depth.txt.
  static TumSequence open(const std::filesystem::path& dir, double max_gap = 0.02,
                          const std::optional<std::filesystem::path>& config = std::nullopt);

  std::size_t size() const { return entries_.size(); }
  const SequenceEntry& entry(std::size_t i) const { return entries_.at(i); }
  const CameraConfig& camera() const { return camera_; }
  const std::optional<Trajectory>& ground_truth() const { return ground_truth_; }

  /// Decodes frame i. A malformed or missing depth image yields nullopt and a
  /// warning on standard error; a malformed color image drops only the color.
  std::optional<SequenceFrame> load(std::size_t i) const;

 private:
  std::filesystem::path dir_;
  std::vector<SequenceEntry> entries_;
  CameraConfig camera_;
  std::optional<Trajectory> ground_truth_;
};

}  // namespace gsdf
