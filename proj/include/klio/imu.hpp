// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Filter state, IMU samples, and the 15-dimensional error state the
// covariance and Kalman algebra operate on.

#pragma once

#include <Eigen/Core>

#include "klio/geometry.hpp"

namespace klio {

/// One inertial measurement: body-frame angular rate and specific force.
struct ImuSample {
  double timestamp = 0.0;      ///< seconds, absolute
  Vec3 gyro = Vec3::Zero();    ///< [rad/s]
  Vec3 accel = Vec3::Zero();   ///< [m/s^2], specific force

  bool is_finite() const { return std::isfinite(timestamp) && gyro.allFinite() && accel.allFinite(); }
};

/// Full filter state: world-frame pose and velocity plus IMU biases.
struct NavState {
  Pose pose;
  Vec3 velocity = Vec3::Zero();     ///< [m/s], world frame
  Vec3 gyro_bias = Vec3::Zero();    ///< [rad/s]
  Vec3 accel_bias = Vec3::Zero();   ///< [m/s^2]
  double timestamp = 0.0;           ///< seconds
};

// Error-state ordering, fixed across the repository:
// (rotation 3, translation 3, velocity 3, gyro bias 3, accel bias 3).
inline constexpr int kStateDim = 15;
inline constexpr int kNoiseDim = 12;  // (gyro noise, accel noise, gyro bias walk, accel bias walk)
inline constexpr int kIdxRot = 0;
inline constexpr int kIdxPos = 3;
inline constexpr int kIdxVel = 6;
inline constexpr int kIdxBg = 9;
inline constexpr int kIdxBa = 12;

using ErrorState = Eigen::Matrix<double, kStateDim, 1>;
using StateCovariance = Eigen::Matrix<double, kStateDim, kStateDim>;
using NoiseVector = Eigen::Matrix<double, kNoiseDim, 1>;

/// Process-noise scale and gravity. The per-step noise covariance is the
/// single scalar q on every axis: Q = q * I (12x12).
struct NoiseParams {
  double q = 1.0;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

/// Retraction: applies a tangent increment to a state. The rotation block is
/// right-multiplied through exp; all other blocks are added.
inline NavState boxplus(const NavState& x, const ErrorState& delta) {
  NavState out = x;
  out.pose.rotation = x.pose.rotation * Rotation::exp(delta.segment<3>(kIdxRot));
  out.pose.translation += delta.segment<3>(kIdxPos);
  out.velocity += delta.segment<3>(kIdxVel);
  out.gyro_bias += delta.segment<3>(kIdxBg);
  out.accel_bias += delta.segment<3>(kIdxBa);
  return out;
}

/// Inverse of boxplus: boxplus(b, boxminus(a, b)) == a.
inline ErrorState boxminus(const NavState& a, const NavState& b) {
  ErrorState delta;
  delta.segment<3>(kIdxRot) = (b.pose.rotation.inverse() * a.pose.rotation).log();
  delta.segment<3>(kIdxPos) = a.pose.translation - b.pose.translation;
  delta.segment<3>(kIdxVel) = a.velocity - b.velocity;
  delta.segment<3>(kIdxBg) = a.gyro_bias - b.gyro_bias;
  delta.segment<3>(kIdxBa) = a.accel_bias - b.accel_bias;
  return delta;
}

inline StateCovariance symmetrized(const StateCovariance& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace klio
