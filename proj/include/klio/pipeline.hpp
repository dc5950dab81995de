// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// The replay-driven odometry loop. IMU samples enter a bounded buffer; each
// scan consumes its (rho_{t-1}, rho_t] interval, runs preintegration ->
// deskew -> GICP -> measurement construction -> Kalman update, and maintains
// the keyframe set and local map. A single logical thread owns the filter
// state; outputs are deterministic for a fixed configuration.

#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <vector>

#include "klio/config.hpp"
#include "klio/ekf.hpp"
#include "klio/mapping.hpp"
#include "klio/preintegration.hpp"
#include "klio/scan_matching.hpp"

namespace klio {

/// Bounded FIFO of IMU samples. Out-of-order pushes are dropped and counted;
/// overflow drops the oldest sample.
class ImuBuffer {
 public:
  explicit ImuBuffer(size_t capacity) : capacity_(capacity) {}

  void push(const ImuSample& sample) {
    if (!buffer_.empty() && sample.timestamp < buffer_.back().timestamp) {
      ++dropped_out_of_order_;
      return;
    }
    if (buffer_.size() == capacity_) {
      buffer_.pop_front();
      ++dropped_overflow_;
    }
    buffer_.push_back(sample);
  }

  /// Returns the samples with timestamp in (t_begin, t_end] and removes
  /// everything up to t_end from the buffer, so each sample is consumed by at
  /// most one scan interval.
  std::vector<ImuSample> extract(double t_begin, double t_end) {
    std::vector<ImuSample> out;
    while (!buffer_.empty() && buffer_.front().timestamp <= t_end) {
      if (buffer_.front().timestamp > t_begin) out.push_back(buffer_.front());
      buffer_.pop_front();
    }
    return out;
  }

  size_t size() const { return buffer_.size(); }
  bool empty() const { return buffer_.empty(); }
  uint64_t dropped_out_of_order() const { return dropped_out_of_order_; }
  uint64_t dropped_overflow() const { return dropped_overflow_; }

 private:
  std::deque<ImuSample> buffer_;
  size_t capacity_;
  uint64_t dropped_out_of_order_ = 0;
  uint64_t dropped_overflow_ = 0;
};

/// Per-scan output record.
struct OdometryRecord {
  double timestamp = 0.0;
  NavState state;
  ErrorState covariance_diagonal = ErrorState::Zero();
  double correspondence_rate = 0.0;
  int iterations = 0;
  bool converged = false;
  double final_cost = 0.0;
  bool keyframe_inserted = false;
  bool registration_failed = false;  ///< GICP rejected; posterior is the prediction
  bool degenerate_scan = false;      ///< too few points after downsampling
  bool prediction_fallback = false;  ///< empty IMU interval, constant-pose prediction
};

struct RunSummary {
  size_t scans = 0;
  size_t keyframes = 0;
  size_t registration_failures = 0;
  size_t degenerate_scans = 0;
  size_t prediction_fallbacks = 0;
  uint64_t imu_dropped_out_of_order = 0;
  uint64_t imu_dropped_overflow = 0;
};

class Pipeline {
 public:
  explicit Pipeline(const Config& config)
      : config_(config), extrinsics_(config.extrinsics()), imu_buffer_(config.imu_buffer_capacity) {}

  void push_imu(const ImuSample& sample) { imu_buffer_.push(sample); }

  OdometryRecord process_scan(const ScanCloud& cloud) {
    const OdometryRecord record = initialized_ ? process(cloud) : bootstrap(cloud);
    records_.push_back(record);
    return record;
  }

  struct Snapshot {
    NavState state;
    StateCovariance covariance;
    std::shared_ptr<const MapCloud> local_map;
    size_t keyframes = 0;
  };

  Snapshot snapshot() const { return {state_, covariance_, local_map_, keyframe_set_.size()}; }

  const std::vector<OdometryRecord>& records() const { return records_; }
  const KeyframeSet& keyframes() const { return keyframe_set_; }

  RunSummary finalize() const {
    RunSummary s;
    s.scans = records_.size();
    s.keyframes = keyframe_set_.size();
    for (const auto& r : records_) {
      s.registration_failures += r.registration_failed ? 1 : 0;
      s.degenerate_scans += r.degenerate_scan ? 1 : 0;
      s.prediction_fallbacks += r.prediction_fallback ? 1 : 0;
    }
    s.imu_dropped_out_of_order = imu_buffer_.dropped_out_of_order();
    s.imu_dropped_overflow = imu_buffer_.dropped_overflow();
    return s;
  }

 private:
  /// First scan: gravity-aligned initial attitude, IMU-based deskew under a
  /// zero-velocity assumption, and insertion as the first keyframe. No update.
  OdometryRecord bootstrap(const ScanCloud& cloud) {
    const double scan_time = cloud.timestamp;
    const double sweep = cloud.sweep_duration();
    std::vector<ImuSample> window = imu_buffer_.extract(scan_time - config_.init_window, scan_time);

    Rotation initial_rotation;
    if (!window.empty()) {
      Vec3 accel_mean = Vec3::Zero();
      for (const auto& s : window) accel_mean += s.accel;
      accel_mean /= static_cast<double>(window.size());
      if (accel_mean.norm() > 1e-6) {
        initial_rotation = Rotation::from_quaternion(
            Eigen::Quaterniond::FromTwoVectors(accel_mean, Vec3(0, 0, 1)));
      }
    }

    // Deskew over the sweep window only; relative motion is all that matters.
    std::vector<ImuSample> sweep_batch;
    for (const auto& s : window)
      if (s.timestamp > scan_time - sweep) sweep_batch.push_back(s);

    NavState anchor;
    anchor.pose = Pose(initial_rotation, Vec3::Zero());
    anchor.timestamp = scan_time - sweep;
    PreintegrationTrajectory traj;
    if (!sweep_batch.empty()) {
      traj = preintegrate_batch(anchor, StateCovariance::Zero(), sweep_batch, config_.noise,
                                nullptr, config_.max_imu_gap)
                 .first;
    }
    const Pose end_pose = traj.empty() ? anchor.pose : traj.back().pose;
    const DeskewedCloud deskewed = deskew(cloud, traj, end_pose, extrinsics_);
    const ScanCloud downsampled = voxel_downsample(deskewed.cloud, config_.voxel_resolution);

    OdometryRecord record;
    record.timestamp = scan_time;
    if (downsampled.size() < config_.min_scan_points) {
      record.degenerate_scan = true;  // stay uninitialized, retry on the next scan
      record.state.pose = Pose(initial_rotation, Vec3::Zero());
      record.state.timestamp = scan_time;
      return record;
    }

    state_ = NavState{};
    state_.pose = Pose(end_pose.rotation, Vec3::Zero());
    state_.timestamp = scan_time;
    covariance_ = StateCovariance::Identity();

    keyframe_set_.insert(state_.pose, downsampled);
    rebuild_local_map(state_.pose.translation);
    if (!sweep_batch.empty()) carry_sample_ = sweep_batch.back();
    last_scan_time_ = scan_time;
    initialized_ = true;

    record.state = state_;
    record.covariance_diagonal = covariance_.diagonal();
    record.correspondence_rate = 1.0;
    record.converged = true;
    record.keyframe_inserted = true;
    return record;
  }

  OdometryRecord process(const ScanCloud& cloud) {
    const double scan_time = cloud.timestamp;
    if (scan_time <= last_scan_time_)
      throw std::invalid_argument("Pipeline: scan timestamps must increase");
    const double dt = scan_time - last_scan_time_;

    OdometryRecord record;
    record.timestamp = scan_time;

    // Prediction over (rho_{t-1}, rho_t].
    std::vector<ImuSample> batch = imu_buffer_.extract(last_scan_time_, scan_time);
    NavState predicted;
    StateCovariance predicted_cov;
    PreintegrationTrajectory traj;
    if (batch.empty()) {
      record.prediction_fallback = true;
      predicted = state_;
      predicted.timestamp = scan_time;
      predicted_cov = covariance_ + config_.noise.q * dt * StateCovariance::Identity();
      traj.states = {state_, predicted};
    } else {
      const ImuSample* carry = carry_sample_ ? &*carry_sample_ : nullptr;
      auto [t, cov] =
          preintegrate_batch(state_, covariance_, batch, config_.noise, carry, config_.max_imu_gap);
      traj = std::move(t);
      predicted_cov = cov;
      // Hold the last sample to bridge any residual gap to the scan stamp.
      if (scan_time - traj.back().timestamp > 1e-9) {
        ImuSample held = batch.back();
        held.timestamp = scan_time;
        const StepJacobians jac =
            propagation_jacobians(traj.back(), &batch.back(), held, config_.noise, config_.max_imu_gap);
        predicted_cov = propagate_covariance_step(predicted_cov, jac, config_.noise);
        traj.states.push_back(
            propagate_step(traj.back(), &batch.back(), held, config_.noise, config_.max_imu_gap));
      }
      predicted = traj.back();
      predicted.timestamp = scan_time;
      carry_sample_ = batch.back();
    }

    // Deskew and downsample.
    const DeskewedCloud deskewed = deskew(cloud, traj, predicted.pose, extrinsics_);
    const ScanCloud downsampled = voxel_downsample(deskewed.cloud, config_.voxel_resolution);
    if (downsampled.size() < config_.min_scan_points) {
      record.degenerate_scan = true;
      return accept_prediction(record, predicted, predicted_cov);
    }

    // Scan matching.
    MatchResult match;
    try {
      match = gicp_align(downsampled, *local_map_, predicted.pose, config_.gicp);
    } catch (const RegistrationError&) {
      record.registration_failed = true;
      return accept_prediction(record, predicted, predicted_cov);
    }
    record.correspondence_rate = match.correspondence_rate;
    record.iterations = match.iterations;
    record.converged = match.converged;
    record.final_cost = match.final_cost;

    // Measurement and update.
    const Measurement z = build_measurement(
        match, prev_match_ ? &*prev_match_ : nullptr, batch, config_.noise.gravity, dt,
        prev_velocity_measurement_ ? &*prev_velocity_measurement_ : nullptr);
    const MeasurementCovariance r = build_measurement_noise(match.hessian, config_.measurement);
    std::tie(state_, covariance_) = kalman_update(predicted, predicted_cov, z, r);
    state_.timestamp = scan_time;

    prev_match_ = match;
    prev_velocity_measurement_ = z.has_velocity ? std::optional<Vec3>(z.velocity) : std::nullopt;

    // Keyframe maintenance.
    if (should_insert_keyframe(match.correspondence_rate, config_.gamma_threshold, keyframe_set_)) {
      keyframe_set_.insert(state_.pose, downsampled);
      rebuild_local_map(state_.pose.translation);
      record.keyframe_inserted = true;
    }

    last_scan_time_ = scan_time;
    record.state = state_;
    record.covariance_diagonal = covariance_.diagonal();
    return record;
  }

  OdometryRecord& accept_prediction(OdometryRecord& record, const NavState& predicted,
                                    const StateCovariance& cov) {
    state_ = predicted;
    covariance_ = cov;
    last_scan_time_ = record.timestamp;
    prev_match_.reset();
    prev_velocity_measurement_.reset();
    record.state = state_;
    record.covariance_diagonal = covariance_.diagonal();
    return record;
  }

  void rebuild_local_map(const Vec3& center) {
    local_map_ = std::make_shared<const MapCloud>(
        build_local_map(keyframe_set_, center, config_.local_map_keyframes,
                        config_.voxel_resolution, config_.gicp.covariance_neighbors));
  }

  Config config_;
  Extrinsics extrinsics_;
  ImuBuffer imu_buffer_;
  bool initialized_ = false;
  double last_scan_time_ = 0.0;
  NavState state_;
  StateCovariance covariance_ = StateCovariance::Identity();
  std::optional<ImuSample> carry_sample_;
  std::optional<MatchResult> prev_match_;
  std::optional<Vec3> prev_velocity_measurement_;
  KeyframeSet keyframe_set_;
  std::shared_ptr<const MapCloud> local_map_;
  std::vector<OdometryRecord> records_;
};

}  // namespace klio
