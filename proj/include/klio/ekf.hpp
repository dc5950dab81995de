// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Full-state measurement construction and the Kalman update. The pose block
// comes straight from scan matching; velocity and bias pseudo-measurements
// are derived from two consecutive scan-matching results combined with the
// averaged IMU data of the interval:
//
//   v~_t  = (p~_t - p~_{t-1}) / dt
//   bw~_t = w_mean - log(R~_{t-1}^T R~_t) / dt
//   ba~_t = a_mean - R~_{t-1}^T (v~_t - v~_{t-1} - g dt) / dt
//
// The observation matrix is the identity on the error state; blocks missing
// from a measurement are realized by inflating their noise rows/columns
// instead of shrinking the measurement vector, keeping a single update path.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

#include "klio/imu.hpp"
#include "klio/scan_matching.hpp"

namespace klio {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full-state measurement with per-block validity flags.
struct Measurement {
  Pose pose;
  Vec3 velocity = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
  bool has_pose = false;
  bool has_velocity = false;
  bool has_gyro_bias = false;
  bool has_accel_bias = false;
};

struct MeasurementNoise {
  double sigma_p_sq = 100.0;
  double sigma_v_sq = 0.1;
  double sigma_omega_sq = 0.1;
  double sigma_a_sq = 0.1;
};

using MeasurementCovariance = Eigen::Matrix<double, kStateDim, kStateDim>;

/// Noise assigned to masked measurement blocks; large enough that the update
/// leaves them untouched.
inline constexpr double kMaskedBlockNoise = 1e12;

// Innovation clamps guarding the bias blocks against scan-matching outliers.
inline constexpr double kGyroBiasInnovationClamp = 0.5;   // [rad/s]
inline constexpr double kAccelBiasInnovationClamp = 2.0;  // [m/s^2]

/// Builds the measurement from the current match, the previous match (null on
/// the first matched frame, which yields a pose-only measurement), the IMU
/// batch of the interval, and the previously constructed velocity measurement
/// (null until one exists; required for the accel-bias line).
inline Measurement build_measurement(const MatchResult& curr_match, const MatchResult* prev_match,
                                     const std::vector<ImuSample>& imu_batch, const Vec3& gravity,
                                     double dt, const Vec3* prev_velocity = nullptr) {
  if (!(dt > 0.0)) throw std::invalid_argument("build_measurement: dt must be > 0");

  Measurement z;
  z.pose = curr_match.pose;
  z.has_pose = true;
  if (prev_match == nullptr) return z;

  z.velocity = (curr_match.pose.translation - prev_match->pose.translation) / dt;
  z.has_velocity = true;

  if (!imu_batch.empty()) {
    Vec3 gyro_mean = Vec3::Zero();
    Vec3 accel_mean = Vec3::Zero();
    for (const auto& s : imu_batch) {
      gyro_mean += s.gyro;
      accel_mean += s.accel;
    }
    gyro_mean /= static_cast<double>(imu_batch.size());
    accel_mean /= static_cast<double>(imu_batch.size());

    const Rotation rel = prev_match->pose.rotation.inverse() * curr_match.pose.rotation;
    z.gyro_bias = gyro_mean - rel.log() / dt;
    z.has_gyro_bias = true;

    if (prev_velocity != nullptr) {
      z.accel_bias = accel_mean - prev_match->pose.rotation.inverse() *
                                      (z.velocity - *prev_velocity - gravity * dt) / dt;
      z.has_accel_bias = true;
    }
  }
  return z;
}

/// Measurement covariance: the pose block is sigma_p^2 times the inverse of
/// the final scan-matching Hessian (eigenvalues floored at 1e-6 of the
/// largest before inversion, so degenerate geometry stays finite); the
/// remaining blocks are isotropic.
inline MeasurementCovariance build_measurement_noise(const Mat6& hessian,
                                                     const MeasurementNoise& noise) {
  MeasurementCovariance r = MeasurementCovariance::Zero();

  Eigen::SelfAdjointEigenSolver<Mat6> eig(0.5 * (hessian + hessian.transpose()));
  const double lambda_max = eig.eigenvalues()(5);
  if (lambda_max <= 0.0) {
    r.topLeftCorner<6, 6>() = kMaskedBlockNoise * Mat6::Identity();
  } else {
    const double floor = 1e-6 * lambda_max;
    Vec6 inv;
    for (int i = 0; i < 6; ++i) inv(i) = 1.0 / std::max(eig.eigenvalues()(i), floor);
    r.topLeftCorner<6, 6>() =
        noise.sigma_p_sq * eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  }
  r.block<3, 3>(kIdxVel, kIdxVel) = noise.sigma_v_sq * Mat3::Identity();
  r.block<3, 3>(kIdxBg, kIdxBg) = noise.sigma_omega_sq * Mat3::Identity();
  r.block<3, 3>(kIdxBa, kIdxBa) = noise.sigma_a_sq * Mat3::Identity();
  return r;
}

namespace detail {

inline void mask_block(MeasurementCovariance& r, ErrorState& innovation, int offset, int size) {
  r.middleRows(offset, size).setZero();
  r.middleCols(offset, size).setZero();
  r.block(offset, offset, size, size) =
      kMaskedBlockNoise * Eigen::MatrixXd::Identity(size, size);
  innovation.segment(offset, size).setZero();
}

inline Vec3 clamped(const Vec3& v, double bound) {
  return v.cwiseMax(-bound).cwiseMin(bound);
}

}  // namespace detail

/// Kalman update with manifold retraction:
///   x = x_hat boxplus K (z boxminus x_hat),  S = (I - K) S_hat,
///   K = S_hat (R + S_hat)^-1.
inline std::pair<NavState, StateCovariance> kalman_update(const NavState& pred,
                                                          const StateCovariance& pred_cov,
                                                          const Measurement& z,
                                                          MeasurementCovariance r) {
  ErrorState innovation = ErrorState::Zero();
  if (z.has_pose) {
    innovation.segment<3>(kIdxRot) = (pred.pose.rotation.inverse() * z.pose.rotation).log();
    innovation.segment<3>(kIdxPos) = z.pose.translation - pred.pose.translation;
  } else {
    detail::mask_block(r, innovation, kIdxRot, 6);
  }
  if (z.has_velocity) {
    innovation.segment<3>(kIdxVel) = z.velocity - pred.velocity;
  } else {
    detail::mask_block(r, innovation, kIdxVel, 3);
  }
  if (z.has_gyro_bias) {
    innovation.segment<3>(kIdxBg) =
        detail::clamped(z.gyro_bias - pred.gyro_bias, kGyroBiasInnovationClamp);
  } else {
    detail::mask_block(r, innovation, kIdxBg, 3);
  }
  if (z.has_accel_bias) {
    innovation.segment<3>(kIdxBa) =
        detail::clamped(z.accel_bias - pred.accel_bias, kAccelBiasInnovationClamp);
  } else {
    detail::mask_block(r, innovation, kIdxBa, 3);
  }

  const StateCovariance s = r + pred_cov;
  const Eigen::LDLT<StateCovariance> ldlt(s);
  // K = S_hat (R + S_hat)^-1; both factors symmetric.
  const StateCovariance gain = ldlt.solve(pred_cov).transpose();
  if (ldlt.info() != Eigen::Success || !gain.allFinite()) {
    Eigen::SelfAdjointEigenSolver<StateCovariance> eig(s);
    throw NumericalError("kalman_update: singular innovation covariance, eigenvalue range [" +
                         std::to_string(eig.eigenvalues()(0)) + ", " +
                         std::to_string(eig.eigenvalues()(kStateDim - 1)) + "]");
  }

  NavState posterior = boxplus(pred, (gain * innovation).eval());
  posterior.timestamp = pred.timestamp;
  const StateCovariance cov = symmetrized((StateCovariance::Identity() - gain) * pred_cov);
  return {posterior, cov};
}

}  // namespace klio
