// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// IMU preintegration: propagates state and covariance through a batch of
// inertial samples between two scan timestamps. The propagation model keeps
// second-order terms driven by angular acceleration and linear jerk, both
// estimated from the difference of consecutive samples:
//
//   R' = R exp(w dt) exp(0.5 alpha dt^2)
//   p' = p + v dt + 0.5 g dt^2 + 0.5 R a dt^2 + (1/6) j dt^3
//   v' = v + g dt + R a dt + 0.5 j dt^2
//   b' = b
//
// with w, a bias-corrected, alpha = (w_k - w_{k-1}) / dt and
// j = R (a_k - a_{k-1}) / dt. The previous sample is treated as noise-free
// when linearizing; its rotation is approximated by the step's start
// rotation, which keeps the step a pure function of (state, prev sample,
// sample) and makes batch splitting exact.

#pragma once

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "klio/geometry.hpp"
#include "klio/imu.hpp"

namespace klio {

struct MeasurementGapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PredictionUnavailableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultMaxImuGap = 0.5;  // [s]

/// Error-state transition and noise Jacobians of one propagation step.
struct StepJacobians {
  Eigen::Matrix<double, kStateDim, kStateDim> F_x;
  Eigen::Matrix<double, kStateDim, kNoiseDim> F_w;
};

/// The K+1 states produced by preintegrating a batch; the first entry is the
/// previous posterior and the last one is the prediction at the batch end.
struct PreintegrationTrajectory {
  std::vector<NavState> states;

  bool empty() const { return states.empty(); }
  size_t size() const { return states.size(); }
  const NavState& front() const { return states.front(); }
  const NavState& back() const { return states.back(); }

  /// State closest in timestamp to t (states are ordered in time).
  const NavState& nearest(double t) const {
    if (states.empty()) throw std::logic_error("PreintegrationTrajectory: empty");
    auto it = std::lower_bound(states.begin(), states.end(), t,
                               [](const NavState& s, double v) { return s.timestamp < v; });
    if (it == states.end()) return states.back();
    if (it == states.begin()) return states.front();
    const auto prev = std::prev(it);
    return (t - prev->timestamp) <= (it->timestamp - t) ? *prev : *it;
  }
};

namespace detail {

/// Intermediate quantities shared by the step itself and its Jacobians.
struct StepTerms {
  double dt = 0.0;
  bool has_prev = false;
  Vec3 w_hat;    // bias-corrected gyro, current sample
  Vec3 a_hat;    // bias-corrected accel, current sample
  Vec3 d_body;   // a_hat - a_hat_prev (zero without prev sample)
  Vec3 w1;       // w_hat * dt
  Vec3 w2;       // 0.5 * alpha * dt^2
};

inline StepTerms step_terms(const NavState& prev, const ImuSample* prev_sample,
                            const ImuSample& sample, double max_gap,
                            const NoiseVector& w) {
  if (!sample.is_finite()) throw std::invalid_argument("propagate_step: non-finite sample");
  StepTerms t;
  t.dt = sample.timestamp - prev.timestamp;
  if (t.dt <= 0.0) throw std::invalid_argument("propagate_step: non-increasing timestamp");
  if (t.dt > max_gap) throw MeasurementGapError("propagate_step: measurement gap of " +
                                                std::to_string(t.dt) + " s exceeds limit");

  t.w_hat = sample.gyro - prev.gyro_bias - w.segment<3>(0);
  t.a_hat = sample.accel - prev.accel_bias - w.segment<3>(3);
  t.w1 = t.w_hat * t.dt;
  t.w2 = Vec3::Zero();
  t.d_body = Vec3::Zero();
  if (prev_sample != nullptr) {
    t.has_prev = true;
    const Vec3 w_prev = prev_sample->gyro - prev.gyro_bias;   // noise-free by convention
    const Vec3 a_prev = prev_sample->accel - prev.accel_bias;
    t.w2 = 0.5 * (t.w_hat - w_prev) * t.dt;  // 0.5 * alpha * dt^2
    t.d_body = t.a_hat - a_prev;
  }
  return t;
}

}  // namespace detail

/// One propagation step with an explicit noise realization w (12-dim, ordered
/// gyro noise / accel noise / gyro bias walk / accel bias walk). The zero-w
/// case is the mean propagation used by the filter.
inline NavState propagate_step_with_noise(const NavState& prev, const ImuSample* prev_sample,
                                          const ImuSample& sample, const NoiseParams& noise,
                                          const NoiseVector& w,
                                          double max_gap = kDefaultMaxImuGap) {
  const detail::StepTerms t = detail::step_terms(prev, prev_sample, sample, max_gap, w);
  const double dt = t.dt;
  const Mat3& r = prev.pose.rotation.matrix();
  const Vec3 accel_world = r * t.a_hat;            // gravity-free, world frame
  const Vec3 jerk = r * t.d_body / dt;             // zero without prev sample

  NavState out = prev;
  out.timestamp = sample.timestamp;
  out.pose.rotation = prev.pose.rotation * Rotation::exp(t.w1) * Rotation::exp(t.w2);
  out.pose.translation = prev.pose.translation + prev.velocity * dt +
                         0.5 * noise.gravity * dt * dt + 0.5 * accel_world * dt * dt +
                         (1.0 / 6.0) * jerk * dt * dt * dt;
  out.velocity = prev.velocity + noise.gravity * dt + accel_world * dt + 0.5 * jerk * dt * dt;
  out.gyro_bias = prev.gyro_bias + w.segment<3>(6);
  out.accel_bias = prev.accel_bias + w.segment<3>(9);
  return out;
}

/// Mean propagation (noise vector set to zero).
inline NavState propagate_step(const NavState& prev, const ImuSample* prev_sample,
                               const ImuSample& sample, const NoiseParams& noise,
                               double max_gap = kDefaultMaxImuGap) {
  return propagate_step_with_noise(prev, prev_sample, sample, noise, NoiseVector::Zero(), max_gap);
}

/// Analytic Jacobians of propagate_step at the given linearization point,
/// with the rotation error defined through right-multiplicative perturbation.
inline StepJacobians propagation_jacobians(const NavState& prev, const ImuSample* prev_sample,
                                           const ImuSample& sample, const NoiseParams&,
                                           double max_gap = kDefaultMaxImuGap) {
  const detail::StepTerms t = detail::step_terms(prev, prev_sample, sample, max_gap,
                                                 NoiseVector::Zero());
  const double dt = t.dt;
  const Mat3& r = prev.pose.rotation.matrix();
  const Mat3 exp_w2 = Rotation::exp(t.w2).matrix();
  const Mat3 a_total = (Rotation::exp(t.w1).matrix() * exp_w2).transpose();  // (exp(w1) exp(w2))^T
  const Mat3 jr_w1 = right_jacobian_so3(t.w1);

  StepJacobians jac;
  jac.F_x.setZero();
  jac.F_w.setZero();
  auto& fx = jac.F_x;
  auto& fw = jac.F_w;

  // Rotation row. The bias perturbation cancels inside alpha (both samples
  // subtract the same bias), so it only enters through w1.
  fx.block<3, 3>(kIdxRot, kIdxRot) = a_total;
  fx.block<3, 3>(kIdxRot, kIdxBg) = -exp_w2.transpose() * jr_w1 * dt;

  // Position row.
  const double dt2 = dt * dt;
  Mat3 p_rot = 0.5 * dt2 * skew(t.a_hat);
  Mat3 v_rot = dt * skew(t.a_hat);
  if (t.has_prev) {
    p_rot += (1.0 / 6.0) * dt2 * skew(t.d_body);
    v_rot += 0.5 * dt * skew(t.d_body);
  }
  fx.block<3, 3>(kIdxPos, kIdxRot) = -r * p_rot;
  fx.block<3, 3>(kIdxPos, kIdxPos) = Mat3::Identity();
  fx.block<3, 3>(kIdxPos, kIdxVel) = dt * Mat3::Identity();
  fx.block<3, 3>(kIdxPos, kIdxBa) = -0.5 * dt2 * r;

  // Velocity row.
  fx.block<3, 3>(kIdxVel, kIdxRot) = -r * v_rot;
  fx.block<3, 3>(kIdxVel, kIdxVel) = Mat3::Identity();
  fx.block<3, 3>(kIdxVel, kIdxBa) = -dt * r;

  // Bias rows are random walks.
  fx.block<3, 3>(kIdxBg, kIdxBg) = Mat3::Identity();
  fx.block<3, 3>(kIdxBa, kIdxBa) = Mat3::Identity();

  // Noise Jacobian. Gyro noise perturbs both w1 and (through alpha) w2;
  // accel noise perturbs the direct accel term and the jerk difference.
  Mat3 rot_ng = -exp_w2.transpose() * jr_w1 * dt;
  double p_na = -0.5 * dt2;
  double v_na = -dt;
  if (t.has_prev) {
    rot_ng -= 0.5 * dt * right_jacobian_so3(t.w2);
    p_na -= (1.0 / 6.0) * dt2;
    v_na -= 0.5 * dt;
  }
  fw.block<3, 3>(kIdxRot, 0) = rot_ng;
  fw.block<3, 3>(kIdxPos, 3) = p_na * r;
  fw.block<3, 3>(kIdxVel, 3) = v_na * r;
  fw.block<3, 3>(kIdxBg, 6) = Mat3::Identity();
  fw.block<3, 3>(kIdxBa, 9) = Mat3::Identity();
  return jac;
}

/// Covariance propagation through one step: F_x S F_x^T + F_w Q F_w^T with
/// Q = q I. The result is re-symmetrized; non-finite output aborts.
inline StateCovariance propagate_covariance_step(const StateCovariance& cov,
                                                 const StepJacobians& jac,
                                                 const NoiseParams& noise) {
  StateCovariance out = jac.F_x * cov * jac.F_x.transpose() +
                        noise.q * (jac.F_w * jac.F_w.transpose());
  if (!out.allFinite()) {
    throw std::runtime_error("propagate_covariance_step: non-finite covariance (|S|_max=" +
                             std::to_string(cov.cwiseAbs().maxCoeff()) + ")");
  }
  return symmetrized(out);
}

/// Propagates state and covariance through a whole batch. `carry_in`, when
/// present, is the last sample of the previous batch and seeds the
/// angular-acceleration/jerk differences of the first step.
inline std::pair<PreintegrationTrajectory, StateCovariance> preintegrate_batch(
    const NavState& start, const StateCovariance& start_cov,
    const std::vector<ImuSample>& batch, const NoiseParams& noise,
    const ImuSample* carry_in = nullptr, double max_gap = kDefaultMaxImuGap) {
  if (batch.empty())
    throw PredictionUnavailableError("preintegrate_batch: empty batch");

  PreintegrationTrajectory traj;
  traj.states.reserve(batch.size() + 1);
  traj.states.push_back(start);
  StateCovariance cov = start_cov;

  const ImuSample* prev_sample = carry_in;
  for (const ImuSample& sample : batch) {
    const NavState& prev = traj.states.back();
    const StepJacobians jac = propagation_jacobians(prev, prev_sample, sample, noise, max_gap);
    cov = propagate_covariance_step(cov, jac, noise);
    traj.states.push_back(propagate_step(prev, prev_sample, sample, noise, max_gap));
    prev_sample = &sample;
  }
  return {std::move(traj), cov};
}

}  // namespace klio
