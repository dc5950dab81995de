// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Trajectory evaluation: timestamp association, closed-form SE(3) alignment
// (scale fixed at 1), and translational APE statistics. Rotational APE is
// reported as auxiliary output.

#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "klio/geometry.hpp"

namespace klio {

struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Greedy nearest-timestamp association within max_dt; every pose on either
/// side is used at most once. Pairs are chosen globally by ascending time
/// difference, which matches the brute-force optimum on jittered streams.
inline std::vector<std::pair<size_t, size_t>> associate(const std::vector<StampedPose>& est,
                                                        const std::vector<StampedPose>& ref,
                                                        double max_dt = 0.02) {
  if (est.empty() || ref.empty()) throw EvaluationError("associate: empty trajectory");

  struct Candidate {
    double dt;
    size_t e, r;
  };
  std::vector<Candidate> candidates;
  size_t lo = 0;
  for (size_t e = 0; e < est.size(); ++e) {
    const double t = est[e].timestamp;
    while (lo < ref.size() && ref[lo].timestamp < t - max_dt) ++lo;
    for (size_t r = lo; r < ref.size() && ref[r].timestamp <= t + max_dt; ++r)
      candidates.push_back({std::abs(ref[r].timestamp - t), e, r});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.dt != b.dt) return a.dt < b.dt;
    if (a.e != b.e) return a.e < b.e;
    return a.r < b.r;
  });

  std::vector<bool> est_used(est.size(), false), ref_used(ref.size(), false);
  std::vector<std::pair<size_t, size_t>> pairs;
  for (const auto& c : candidates) {
    if (est_used[c.e] || ref_used[c.r]) continue;
    est_used[c.e] = true;
    ref_used[c.r] = true;
    pairs.push_back({c.e, c.r});
  }
  if (pairs.empty()) throw EvaluationError("associate: no pairs within the time window");
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

/// Least-squares rigid transform minimizing sum ||ref - (R est + t)||^2
/// (closed form via SVD of the cross-covariance with reflection correction).
inline Pose umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("umeyama_align: size mismatch");
  if (est.size() < 3) throw EvaluationError("umeyama_align: need at least 3 pairs");

  Eigen::Matrix3Xd src(3, est.size()), dst(3, ref.size());
  Vec3 mean = Vec3::Zero();
  for (size_t i = 0; i < est.size(); ++i) {
    src.col(static_cast<long>(i)) = est[i];
    dst.col(static_cast<long>(i)) = ref[i];
    mean += est[i];
  }
  mean /= static_cast<double>(est.size());

  // A collinear (or coincident) source leaves a rotation axis unconstrained.
  Mat3 scatter = Mat3::Zero();
  for (const auto& p : est) scatter += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  if (eig.eigenvalues()(1) <= 1e-12 * std::max(eig.eigenvalues()(2), 1.0))
    throw EvaluationError("umeyama_align: degenerate (collinear) configuration");

  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
  return Pose(Rotation::from_matrix(t.topLeftCorner<3, 3>()), t.topRightCorner<3, 1>());
}

struct ApeStats {
  size_t pairs = 0;
  double rmse = 0.0;       ///< translational APE RMSE [m]
  double mean = 0.0;
  double max = 0.0;
  double rot_rmse_deg = 0.0;  ///< auxiliary rotational APE
  Pose alignment;             ///< est -> ref transform used
  std::vector<double> timestamps;  ///< per-pair est timestamps
  std::vector<double> errors;      ///< per-pair translational errors [m]
};

/// Full protocol: associate, align with the rigid Umeyama solution, report
/// RMSE of the translational residuals.
inline ApeStats evaluate_ape(const std::vector<StampedPose>& est,
                             const std::vector<StampedPose>& ref, double max_dt = 0.02) {
  const auto pairs = associate(est, ref, max_dt);
  std::vector<Vec3> est_pos, ref_pos;
  est_pos.reserve(pairs.size());
  ref_pos.reserve(pairs.size());
  for (const auto& [e, r] : pairs) {
    est_pos.push_back(est[e].pose.translation);
    ref_pos.push_back(ref[r].pose.translation);
  }

  ApeStats stats;
  stats.alignment = umeyama_align(est_pos, ref_pos);
  stats.pairs = pairs.size();
  double sum_sq = 0.0, sum = 0.0, rot_sum_sq = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const double err = (ref_pos[i] - stats.alignment * est_pos[i]).norm();
    stats.timestamps.push_back(est[pairs[i].first].timestamp);
    stats.errors.push_back(err);
    sum_sq += err * err;
    sum += err;
    stats.max = std::max(stats.max, err);
    const Rotation rot_est = stats.alignment.rotation * est[pairs[i].first].pose.rotation;
    const double rot_err = ref[pairs[i].second].pose.rotation.angle_to(rot_est);
    rot_sum_sq += rot_err * rot_err;
  }
  const double n = static_cast<double>(pairs.size());
  stats.rmse = std::sqrt(sum_sq / n);
  stats.mean = sum / n;
  stats.rot_rmse_deg = std::sqrt(rot_sum_sq / n) * 180.0 / M_PI;
  return stats;
}

}  // namespace klio
