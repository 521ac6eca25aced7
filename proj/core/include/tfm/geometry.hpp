// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

namespace tfm {

/// Wraps an angle into (−π, π].
double normalize_angle(double radians);

struct PointBEV {
  double x = 0.0;  // forward, meters
  double y = 0.0;  // left, meters

  bool operator==(const PointBEV&) const = default;
};

double distance(const PointBEV& a, const PointBEV& b);

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Planar rigid motion: rotate by yaw, then translate by (x, y). Used both as
/// an absolute ego pose in the world frame and as a frame-to-frame transform.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(double x, double y, double yaw);

  static RigidTransform identity() { return {}; }
  /// Recovers (x, y, yaw) from a homogeneous matrix. The rotation block must
  /// be orthonormal with determinant +1 to within 1e-9.
  static RigidTransform from_matrix(const Matrix3& m);

  double x() const { return x_; }
  double y() const { return y_; }
  double yaw() const { return yaw_; }

  Matrix3 to_matrix() const;

  /// (this ∘ other): apply `other` first, then `this`.
  RigidTransform operator*(const RigidTransform& other) const;
  PointBEV apply(const PointBEV& p) const;
  RigidTransform inverse() const;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double yaw_ = 0.0;
};

/// Ego pose in the fixed world frame.
using RigidPose = RigidTransform;

RigidTransform invert(const RigidPose& pose);
PointBEV apply(const RigidTransform& transform, const PointBEV& p);

/// Transform taking points in the past ego frame to the current ego frame:
/// pose_now⁻¹ · pose_past.
RigidTransform compose_relative(const RigidPose& pose_now, const RigidPose& pose_past);

Matrix3 matmul3(const Matrix3& a, const Matrix3& b);

}  // namespace tfm
