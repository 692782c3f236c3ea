// SPDX-License-Identifier: Apache-2.0

#include "gsdf/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace gsdf {

Mat3 skew(const Vec3& a) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -a.z(),  a.y(),
        a.z(),    0.0, -a.x(),
       -a.y(),  a.x(),    0.0;
  // clang-format on
  return s;
}

Pose Pose::FromQuaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  Pose p;
  p.rotation = q.normalized().toRotationMatrix();
  p.translation = t;
  return p;
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  return q;
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Mat3 rtr = rotation.transpose() * rotation;
  return (rtr - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose se3_exp(const Vec6& twist) {
  const Vec3 v = twist.head<3>();
  const Vec3 w = twist.tail<3>();
  const double theta = w.norm();
  const Mat3 w_hat = skew(w);

  Pose out;
  if (theta < 1e-8) {
    out.rotation = Mat3::Identity() + w_hat;
    // Re-orthonormalize the first-order rotation.
    Eigen::JacobiSVD<Mat3> svd(out.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
    out.translation = (Mat3::Identity() + 0.5 * w_hat) * v;
    return out;
  }
  const double theta2 = theta * theta;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  const double c = (theta - std::sin(theta)) / (theta2 * theta);
  const Mat3 w_hat2 = w_hat * w_hat;
  out.rotation = Mat3::Identity() + a * w_hat + b * w_hat2;
  const Mat3 V = Mat3::Identity() + b * w_hat + c * w_hat2;
  out.translation = V * v;
  return out;
}

Vec6 se3_log(const Pose& pose) {
  const Eigen::AngleAxisd aa(pose.rotation);
  const double theta = aa.angle();
  const Vec3 w = aa.axis() * theta;
  const Mat3 w_hat = skew(w);
  Mat3 V_inv = Mat3::Identity() - 0.5 * w_hat;
  if (theta > 1e-8) {
    const double half = 0.5 * theta;
    const double coeff = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
    V_inv += coeff * w_hat * w_hat;
  }
  Vec6 out;
  out.head<3>() = V_inv * pose.translation;
  out.tail<3>() = w;
  return out;
}

double rotation_angle(const Mat3& r) {
  // atan2 stays well conditioned near 0 and pi, unlike acos of the trace.
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0));
}

Intrinsics Intrinsics::scaled(int factor) const {
  Intrinsics out = *this;
  const double f = static_cast<double>(factor);
  out.fx = fx / f;
  out.fy = fy / f;
  out.cx = (cx + 0.5) / f - 0.5;
  out.cy = (cy + 0.5) / f - 0.5;
  out.width = width / factor;
  out.height = height / factor;
  return out;
}

Vec2 project(const Intrinsics& intr, const Vec3& p_cam) {
  if (!(p_cam.z() > 0.0)) throw GeometryError("behind camera");
  return {intr.fx * p_cam.x() / p_cam.z() + intr.cx, intr.fy * p_cam.y() / p_cam.z() + intr.cy};
}

Vec3 backproject(const Intrinsics& intr, const Vec2& uv, double depth) {
  if (!(depth > 0.0)) throw GeometryError("invalid depth");
  return {(uv.x() - intr.cx) / intr.fx * depth, (uv.y() - intr.cy) / intr.fy * depth, depth};
}

ColorFrame::ColorFrame(const Intrinsics& intr, double stamp)
    : channels{Image<float>(intr.width, intr.height), Image<float>(intr.width, intr.height),
               Image<float>(intr.width, intr.height)},
      intrinsics(intr),
      timestamp(stamp) {}

namespace {

double interpolate(const Image<float>& img, double u, double v) {
  const int w = img.width();
  const int h = img.height();
  int x0 = static_cast<int>(std::floor(u));
  int y0 = static_cast<int>(std::floor(v));
  x0 = std::clamp(x0, 0, std::max(w - 2, 0));
  y0 = std::clamp(y0, 0, std::max(h - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double ax = u - x0;
  const double ay = v - y0;
  const double top = (1.0 - ax) * img(x0, y0) + ax * img(x1, y0);
  const double bottom = (1.0 - ax) * img(x0, y1) + ax * img(x1, y1);
  return (1.0 - ay) * top + ay * bottom;
}

}  // namespace

std::optional<IntensitySample> bilinear_sample(const Image<float>& image, const Vec2& uv) {
  const double u = uv.x();
  const double v = uv.y();
  const double u_max = image.width() - 1;
  const double v_max = image.height() - 1;
  if (!(u >= 0.0 && v >= 0.0 && u <= u_max && v <= v_max)) return std::nullopt;

  IntensitySample s;
  s.value = interpolate(image, u, v);

  const double u_lo = std::max(u - 0.5, 0.0);
  const double u_hi = std::min(u + 0.5, u_max);
  const double v_lo = std::max(v - 0.5, 0.0);
  const double v_hi = std::min(v + 0.5, v_max);
  if (u_hi > u_lo) {
    s.gradient.x() = (interpolate(image, u_hi, v) - interpolate(image, u_lo, v)) / (u_hi - u_lo);
  }
  if (v_hi > v_lo) {
    s.gradient.y() = (interpolate(image, u, v_hi) - interpolate(image, u, v_lo)) / (v_hi - v_lo);
  }
  return s;
}

std::optional<IntensitySample> bilinear_sample(const ColorFrame& frame, const Vec2& uv,
                                               int channel) {
  return bilinear_sample(frame.channels.at(static_cast<std::size_t>(channel)), uv);
}

}  // namespace gsdf
