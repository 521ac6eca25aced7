// SPDX-License-Identifier: Apache-2.0
#include "tfm/geometry.hpp"

#include <cmath>
#include <numbers>

#include "tfm/error.hpp"

namespace tfm {

double normalize_angle(double radians) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::fmod(radians, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

double distance(const PointBEV& a, const PointBEV& b) { return std::hypot(a.x - b.x, a.y - b.y); }

RigidTransform::RigidTransform(double x, double y, double yaw)
    : x_(x), y_(y), yaw_(normalize_angle(yaw)) {}

RigidTransform RigidTransform::from_matrix(const Matrix3& m) {
  const double det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  const bool orthonormal = std::abs(m[0][0] * m[0][0] + m[1][0] * m[1][0] - 1.0) < 1e-9 &&
                           std::abs(m[0][1] * m[0][1] + m[1][1] * m[1][1] - 1.0) < 1e-9 &&
                           std::abs(m[0][0] * m[0][1] + m[1][0] * m[1][1]) < 1e-9;
  if (!orthonormal || std::abs(det - 1.0) > 1e-9) {
    throw NumericError("from_matrix: rotation block is not a proper rotation");
  }
  return {m[0][2], m[1][2], std::atan2(m[1][0], m[0][0])};
}

Matrix3 RigidTransform::to_matrix() const {
  const double c = std::cos(yaw_);
  const double s = std::sin(yaw_);
  return {{{c, -s, x_}, {s, c, y_}, {0.0, 0.0, 1.0}}};
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  const double c = std::cos(yaw_);
  const double s = std::sin(yaw_);
  return {x_ + c * other.x_ - s * other.y_, y_ + s * other.x_ + c * other.y_, yaw_ + other.yaw_};
}

PointBEV RigidTransform::apply(const PointBEV& p) const {
  const double c = std::cos(yaw_);
  const double s = std::sin(yaw_);
  return {x_ + c * p.x - s * p.y, y_ + s * p.x + c * p.y};
}

RigidTransform RigidTransform::inverse() const {
  const double c = std::cos(yaw_);
  const double s = std::sin(yaw_);
  // R⁻¹ = Rᵀ, t' = −Rᵀ t
  return {-(c * x_ + s * y_), -(-s * x_ + c * y_), -yaw_};
}

RigidTransform invert(const RigidPose& pose) { return pose.inverse(); }

PointBEV apply(const RigidTransform& transform, const PointBEV& p) { return transform.apply(p); }

RigidTransform compose_relative(const RigidPose& pose_now, const RigidPose& pose_past) {
  return pose_now.inverse() * pose_past;
}

Matrix3 matmul3(const Matrix3& a, const Matrix3& b) {
  Matrix3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

}  // namespace tfm
