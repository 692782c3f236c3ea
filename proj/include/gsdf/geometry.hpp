// SPDX-License-Identifier: Apache-2.0
//
// Rigid transforms, pinhole camera model and image containers shared by every
// other part of the library.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gsdf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Skew-symmetric matrix with skew(a) * b == a.cross(b).
Mat3 skew(const Vec3& a);

/// Rigid body transform mapping camera coordinates to world coordinates:
/// p_world = rotation * p_cam + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose Identity() { return {}; }
  static Pose FromQuaternion(const Eigen::Quaterniond& q, const Vec3& t);

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  Pose operator*(const Pose& other) const;
  Pose inverse() const;

  /// World point into this frame: R^T (p - t).
  Vec3 to_local(const Vec3& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }

  Eigen::Quaterniond quaternion() const;

  /// Orthonormal with det = +1 within tol.
  bool is_valid(double tol = 1e-9) const;
};

/// Twist layout is (v, w): translational part first, rotational second.
Pose se3_exp(const Vec6& twist);
Vec6 se3_log(const Pose& pose);

/// Angle of a rotation matrix in radians, in [0, pi].
double rotation_angle(const Mat3& r);

struct Intrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;

  bool is_valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width &&
           cy >= 0 && cy < height;
  }
  /// Same pinhole geometry at 1/factor resolution.
  Intrinsics scaled(int factor) const;
};

/// Throws GeometryError("behind camera") when p_cam.z() <= 0.
Vec2 project(const Intrinsics& intr, const Vec3& p_cam);
/// Throws GeometryError on non-positive depth.
Vec3 backproject(const Intrinsics& intr, const Vec2& uv, double depth);

/// Row-major single channel image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  bool in_bounds(int u, int v) const { return u >= 0 && v >= 0 && u < width_ && v < height_; }

  T& operator()(int u, int v) { return data_[index(u, v)]; }
  const T& operator()(int u, int v) const { return data_[index(u, v)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Depth in meters; 0 or NaN marks an invalid pixel.
struct DepthFrame {
  Image<float> values;
  Intrinsics intrinsics;
  double timestamp = 0.0;

  DepthFrame() = default;
  DepthFrame(const Intrinsics& intr, double stamp = 0.0)
      : values(intr.width, intr.height, 0.0f), intrinsics(intr), timestamp(stamp) {}

  bool valid(int u, int v) const {
    const float d = values(u, v);
    return d > 0.0f && std::isfinite(d);
  }
};

/// Three channels normalized to [0, 1].
struct ColorFrame {
  std::array<Image<float>, 3> channels;
  Intrinsics intrinsics;
  double timestamp = 0.0;

  ColorFrame() = default;
  ColorFrame(const Intrinsics& intr, double stamp = 0.0);

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
};

struct IntensitySample {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();  // d/du, d/dv in intensity per pixel
};

/// Bilinear interpolation with image gradient from central differences of
/// bilinear samples at +-0.5 px. Returns nullopt outside [0, w-1] x [0, h-1].
std::optional<IntensitySample> bilinear_sample(const Image<float>& image, const Vec2& uv);
std::optional<IntensitySample> bilinear_sample(const ColorFrame& frame, const Vec2& uv,
                                               int channel);

}  // namespace gsdf
