// SPDX-License-Identifier: Apache-2.0

#include "gsdf/dataset_io.hpp"

#include "gsdf/image_io.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <tuple>

namespace gsdf {

std::string format_pose_line(const TimedPose& p) {
  Eigen::Quaterniond q = p.pose.quaternion().normalized();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(6) << p.timestamp << ' ' << p.pose.translation.x() << ' '
     << p.pose.translation.y() << ' ' << p.pose.translation.z() << ' ' << q.x() << ' ' << q.y()
     << ' ' << q.z() << ' ' << q.w();
  // "-0.000000" reads as a sign flip to humans; print it as zero.
  std::string s = ss.str();
  std::string out;
  std::istringstream words(s);
  std::string w;
  while (words >> w) {
    if (w.find_first_not_of("-0.") == std::string::npos && w.front() == '-') w.erase(0, 1);
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

void write_trajectory(const Trajectory& traj, std::ostream& out) {
  for (const TimedPose& p : traj) out << format_pose_line(p) << '\n';
}

void write_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot open " + path.string());
  write_trajectory(traj, out);
  if (!out) throw DatasetError("write failed: " + path.string());
}

Trajectory read_trajectory(std::istream& in) {
  Trajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw DatasetError("line " + std::to_string(line_no) + ": expected 8 numbers");
    }
    std::string rest;
    if (ss >> rest) throw DatasetError("line " + std::to_string(line_no) + ": trailing data");
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (!(q.norm() > 1e-6)) throw DatasetError("line " + std::to_string(line_no) + ": zero quaternion");
    if (!traj.empty() && !(t > traj.back().timestamp)) {
      throw DatasetError("line " + std::to_string(line_no) + ": timestamps must increase");
    }
    traj.push_back({t, Pose::FromQuaternion(q.normalized(), Vec3(tx, ty, tz))});
  }
  return traj;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  return read_trajectory(in);
}

std::vector<std::pair<std::size_t, std::size_t>> associate_timestamps(
    const std::vector<double>& a, const std::vector<double>& b, double max_gap) {
  std::vector<std::size_t> order_b(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) order_b[i] = i;
  std::sort(order_b.begin(), order_b.end(), [&](std::size_t x, std::size_t y) { return b[x] < b[y]; });
  std::vector<double> sorted_b(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) sorted_b[i] = b[order_b[i]];

  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto it = std::lower_bound(sorted_b.begin(), sorted_b.end(), a[i] - max_gap);
    for (; it != sorted_b.end() && *it <= a[i] + max_gap; ++it) {
      const auto j = order_b[static_cast<std::size_t>(it - sorted_b.begin())];
      candidates.emplace_back(std::abs(a[i] - b[j]), i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [gap, i, j] : candidates) {
    if (gap > max_gap || used_a[i] || used_b[j]) continue;
    used_a[i] = used_b[j] = true;
    pairs.emplace_back(i, j);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

Pose align_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) throw DatasetError("alignment needs matching point lists");
  if (src.size() < 2) throw DatasetError("alignment needs at least two pose pairs");
  Eigen::Matrix3Xd s(3, static_cast<Eigen::Index>(src.size()));
  Eigen::Matrix3Xd d(3, static_cast<Eigen::Index>(dst.size()));
  for (std::size_t i = 0; i < src.size(); ++i) {
    s.col(static_cast<Eigen::Index>(i)) = src[i];
    d.col(static_cast<Eigen::Index>(i)) = dst[i];
  }
  const Eigen::Matrix4d T = Eigen::umeyama(s, d, false);
  Pose out;
  out.rotation = T.topLeftCorner<3, 3>();
  out.translation = T.topRightCorner<3, 1>();
  return out;
}

AteResult absolute_trajectory_error(const Trajectory& estimated, const Trajectory& ground_truth,
                                    double max_gap) {
  std::vector<double> ta, tb;
  for (const auto& p : estimated) ta.push_back(p.timestamp);
  for (const auto& p : ground_truth) tb.push_back(p.timestamp);
  const auto pairs = associate_timestamps(ta, tb, max_gap);
  if (pairs.size() < 2) throw DatasetError("ATE needs at least two associated poses");
  std::vector<Vec3> src, dst;
  for (const auto& [i, j] : pairs) {
    src.push_back(estimated[i].pose.translation);
    dst.push_back(ground_truth[j].pose.translation);
  }
  AteResult result;
  result.pairs = pairs.size();
  result.alignment = align_rigid(src, dst);
  double sum = 0.0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    sum += (result.alignment * src[k] - dst[k]).squaredNorm();
  }
  result.rmse_cm = 100.0 * std::sqrt(sum / static_cast<double>(src.size()));
  return result;
}

CameraConfig read_camera_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  CameraConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = line.substr(0, line.find('#'));
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
    double value = 0.0;
    try {
      value = std::stod(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
    Intrinsics& k = cfg.intrinsics;
    if (key == "fx") k.fx = value;
    else if (key == "fy") k.fy = value;
    else if (key == "cx") k.cx = value;
    else if (key == "cy") k.cy = value;
    else if (key == "width") k.width = static_cast<int>(value);
    else if (key == "height") k.height = static_cast<int>(value);
    else if (key == "depth_scale") cfg.depth_scale = value;
    else throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": unknown key " + key);
  }
  if (!cfg.intrinsics.is_valid() || !(cfg.depth_scale > 0.0)) {
    throw DatasetError(path.string() + ": invalid camera parameters");
  }
  return cfg;
}

DepthFrame read_depth_png(const std::filesystem::path& path, const Intrinsics& intr,
                          double depth_scale) {
  const PngImage img = read_png(path);
  if (img.channels != 1 || img.bit_depth != 16) {
    throw ImageIoError("depth image must be 16-bit gray: " + path.string());
  }
  if (img.width != intr.width || img.height != intr.height) {
    throw ImageIoError("depth image size does not match intrinsics: " + path.string());
  }
  DepthFrame frame(intr);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      frame.values(u, v) = static_cast<float>(img.at(u, v, 0) / depth_scale);
    }
  }
  return frame;
}

void write_depth_png(const std::filesystem::path& path, const DepthFrame& depth,
                     double depth_scale) {
  const int w = depth.values.width();
  const int h = depth.values.height();
  std::vector<std::uint16_t> raw(static_cast<std::size_t>(w) * h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!depth.valid(u, v)) continue;
      const double r = std::round(static_cast<double>(depth.values(u, v)) * depth_scale);
      raw[static_cast<std::size_t>(v) * w + u] = static_cast<std::uint16_t>(std::clamp(r, 0.0, 65535.0));
    }
  }
  write_png_gray16(path, w, h, raw);
}

ColorFrame read_color_png(const std::filesystem::path& path, const Intrinsics& intr) {
  const PngImage img = read_png(path);
  if (img.width != intr.width || img.height != intr.height) {
    throw ImageIoError("color image size does not match intrinsics: " + path.string());
  }
  const double scale = img.bit_depth == 16 ? 65535.0 : 255.0;
  ColorFrame frame(intr);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      for (int c = 0; c < 3; ++c) {
        // Gray (+alpha) images replicate the single channel.
        const int src = img.channels >= 3 ? c : 0;
        frame.channels[static_cast<std::size_t>(c)](u, v) =
            static_cast<float>(img.at(u, v, src) / scale);
      }
    }
  }
  return frame;
}

void write_color_png(const std::filesystem::path& path, const ColorFrame& color) {
  const int w = color.channels[0].width();
  const int h = color.channels[0].height();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      for (int c = 0; c < 3; ++c) {
        const double x = std::clamp(static_cast<double>(color.channels[static_cast<std::size_t>(c)](u, v)), 0.0, 1.0);
        rgb[(static_cast<std::size_t>(v) * w + u) * 3 + c] = static_cast<std::uint8_t>(std::lround(x * 255.0));
      }
    }
  }
  write_png_rgb8(path, w, h, rgb);
}

namespace {

// "timestamp relative/path" lines of rgb.txt / depth.txt.
std::vector<std::pair<double, std::string>> read_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::vector<std::pair<double, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double t;
    std::string file;
    if (!(ss >> t >> file)) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": expected 'timestamp file'");
    }
    out.emplace_back(t, file);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  return out;
}

}  // namespace

TumSequence TumSequence::open(const std::filesystem::path& dir, double max_gap,
                              const std::optional<std::filesystem::path>& config) {
  TumSequence seq;
  seq.dir_ = dir;
  if (config) {
    seq.camera_ = read_camera_config(*config);
  } else if (std::filesystem::exists(dir / "camera.txt")) {
    seq.camera_ = read_camera_config(dir / "camera.txt");
  }

  const auto depth_index = read_index(dir / "depth.txt");
  std::vector<std::pair<double, std::string>> color_index;
  if (std::filesystem::exists(dir / "rgb.txt")) color_index = read_index(dir / "rgb.txt");

  std::vector<double> td, tc;
  for (const auto& e : depth_index) td.push_back(e.first);
  for (const auto& e : color_index) tc.push_back(e.first);
  const auto pairs = associate_timestamps(td, tc, max_gap);
  std::map<std::size_t, std::size_t> color_of;
  for (const auto& [i, j] : pairs) color_of[i] = j;

  for (std::size_t i = 0; i < depth_index.size(); ++i) {
    if (!seq.entries_.empty() && !(depth_index[i].first > seq.entries_.back().depth_timestamp)) {
      continue;  // duplicate stamp: keep the first
    }
    SequenceEntry e;
    e.depth_timestamp = depth_index[i].first;
    e.depth_path = dir / depth_index[i].second;
    if (const auto it = color_of.find(i); it != color_of.end()) {
      e.color_timestamp = color_index[it->second].first;
      e.color_path = dir / color_index[it->second].second;
    }
    seq.entries_.push_back(std::move(e));
  }

  if (std::filesystem::exists(dir / "groundtruth.txt")) {
    seq.ground_truth_ = read_trajectory(dir / "groundtruth.txt");
  }
  return seq;
}

std::optional<SequenceFrame> TumSequence::load(std::size_t i) const {
  const SequenceEntry& e = entries_.at(i);
  SequenceFrame frame;
  try {
    frame.depth = read_depth_png(e.depth_path, camera_.intrinsics, camera_.depth_scale);
  } catch (const ImageIoError& err) {
    std::cerr << "warning: skipping frame " << i << ": " << err.what() << '\n';
    return std::nullopt;
  }
  frame.depth.timestamp = e.depth_timestamp;
  if (e.color_path) {
    try {
      frame.color = read_color_png(*e.color_path, camera_.intrinsics);
      frame.color->timestamp = *e.color_timestamp;
    } catch (const ImageIoError& err) {
      std::cerr << "warning: frame " << i << " without color: " << err.what() << '\n';
    }
  }
  return frame;
}

}  // namespace gsdf
