// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// SO(3)/SE(3) primitives: exponential and logarithm maps, rigid transforms,
// and the tangent-space increments used everywhere else in the library.
//
// Conventions (global for the whole repository):
//   - tangent vectors are ordered (rotation, translation)
//   - increments are applied on the right: R <- R * exp(delta_theta)
//   - rotation and translation occupy separate tangent blocks (no screw
//     coupling); translation increments are plain vector additions

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace klio {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Below this angle [rad], exp/log and the SO(3) Jacobians switch to their
/// second-order Taylor expansions.
inline constexpr double kSmallAngle = 1e-7;

/// Skew-symmetric matrix such that skew(v) * u = v x u.
inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

/// Inverse of skew() for (near-)antisymmetric input.
inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * 0.5;
}

/// An element of SO(3). Matrix-backed; the representation is an internal
/// detail and all access goes through the map/compose interface.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return Rotation(); }

  /// Wraps a rotation matrix. Throws if the input is not orthonormal with
  /// determinant +1 (tolerance 1e-6); mild drift is projected away.
  static Rotation from_matrix(const Mat3& m) {
    if (!m.allFinite()) throw std::invalid_argument("Rotation: non-finite matrix");
    const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-6 || m.determinant() < 0.0)
      throw std::invalid_argument("Rotation: matrix is not a proper rotation");
    Rotation r(m);
    if (ortho > 1e-12) r = r.renormalized();
    return r;
  }

  /// Exponential map (Rodrigues). Falls back to the second-order series for
  /// small angles. Rejects non-finite input.
  static Rotation exp(const Vec3& axis_angle) {
    if (!axis_angle.allFinite()) throw std::invalid_argument("so3_exp: non-finite input");
    const double theta = axis_angle.norm();
    const Mat3 k = skew(axis_angle);
    if (theta < kSmallAngle) {
      return Rotation(Mat3::Identity() + k + 0.5 * k * k);
    }
    const double s = std::sin(theta) / theta;
    const double c = (1.0 - std::cos(theta)) / (theta * theta);
    return Rotation(Mat3::Identity() + s * k + c * k * k);
  }

  /// Logarithm map: principal axis-angle with norm <= pi. The near-pi case
  /// uses the largest-diagonal branch of the symmetric part.
  Vec3 log() const {
    const Vec3 w = vee(m_);              // sin(theta) * axis
    const double sin_theta = w.norm();
    const double cos_theta = 0.5 * (m_.trace() - 1.0);
    const double theta = std::atan2(sin_theta, cos_theta);

    if (theta < kSmallAngle) {
      return w * (1.0 + theta * theta / 6.0);
    }
    if (M_PI - theta > 1e-6) {
      return w * (theta / sin_theta);
    }
    // Near pi: sin(theta) ~ 0, recover the axis from S = (R + R^T)/2 =
    // I + (1 - cos)(aa^T - I) through its largest diagonal entry.
    const Mat3 sym = 0.5 * (m_ + m_.transpose());
    int i = 0;
    sym.diagonal().maxCoeff(&i);
    const double denom = 1.0 - cos_theta;
    Vec3 axis;
    axis[i] = std::sqrt(std::max(0.0, (sym(i, i) - cos_theta) / denom));
    const int j = (i + 1) % 3;
    const int k = (i + 2) % 3;
    axis[j] = sym(i, j) / (denom * axis[i]);
    axis[k] = sym(i, k) / (denom * axis[i]);
    axis.normalize();
    if (w.dot(axis) < 0.0) axis = -axis;
    if (sin_theta < 1e-12) {
      // theta == pi: the sign is a free choice, make it canonical.
      for (int c = 0; c < 3; ++c) {
        if (std::abs(axis[c]) > 1e-12) {
          if (axis[c] < 0.0) axis = -axis;
          break;
        }
      }
    }
    return axis * theta;
  }

  Rotation operator*(const Rotation& rhs) const { return Rotation(m_ * rhs.m_); }
  Vec3 operator*(const Vec3& p) const { return m_ * p; }

  Rotation inverse() const { return Rotation(m_.transpose()); }
  const Mat3& matrix() const { return m_; }

  /// Projects back onto SO(3) (nearest by quaternion normalization).
  Rotation renormalized() const {
    return Rotation(Eigen::Quaterniond(m_).normalized().toRotationMatrix());
  }

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(m_).normalized(); }

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    if (q.norm() < 1e-12) throw std::invalid_argument("Rotation: zero quaternion");
    return Rotation(q.normalized().toRotationMatrix());
  }

  /// Rotation angle [rad] relative to rhs.
  double angle_to(const Rotation& rhs) const { return (inverse() * rhs).log().norm(); }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

inline Rotation so3_exp(const Vec3& axis_angle) { return Rotation::exp(axis_angle); }
inline Vec3 so3_log(const Rotation& r) { return r.log(); }

/// Right Jacobian of SO(3): exp(phi + d) ~= exp(phi) * exp(Jr(phi) d).
inline Mat3 right_jacobian_so3(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() - a * k + b * k * k;
}

/// Rigid transform: rotation followed by translation.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }

  Pose operator*(const Pose& rhs) const {
    return Pose(rotation * rhs.rotation, rotation * rhs.translation + translation);
  }

  /// Applies the transform to a point: R * p + t.
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  Pose inverse() const {
    const Rotation r_inv = rotation.inverse();
    return Pose(r_inv, -(r_inv * translation));
  }
};

inline Vec3 transform_point(const Pose& t, const Vec3& p) { return t * p; }

/// A pose with its timestamp; the unit trajectories are made of.
struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

/// Applies a (rotation, translation) tangent increment on the right.
inline Pose boxplus(const Pose& t, const Vec6& delta) {
  return Pose(t.rotation * Rotation::exp(delta.head<3>()), t.translation + delta.tail<3>());
}

/// Tangent difference such that boxplus(b, boxminus(a, b)) == a.
inline Vec6 boxminus(const Pose& a, const Pose& b) {
  Vec6 delta;
  delta.head<3>() = (b.rotation.inverse() * a.rotation).log();
  delta.tail<3>() = a.translation - b.translation;
  return delta;
}

}  // namespace klio
