// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Motion compensation of raw sweeps and GICP registration against the local
// map. The registration minimizes the gated distribution-to-distribution
// cost
//
//   sum_i d_i^T (C_q + R C_p R^T)^-1 d_i,   d_i = q_i - T p_i,
//
// with plain Gauss-Newton (step halving, no damping, so the final Hessian
// stays the unmodified normal-equations matrix). Correspondences are
// re-associated every iteration and the Mahalanobis weights are recomputed
// at the current rotation.

#pragma once

#include <Eigen/Eigenvalues>

#include <limits>
#include <stdexcept>
#include <vector>

#include "klio/map_cloud.hpp"
#include "klio/point_cloud.hpp"
#include "klio/preintegration.hpp"

namespace klio {

struct RegistrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// LiDAR frame expressed in the IMU frame.
struct Extrinsics {
  Pose T_imu_lidar;
};

struct MatchResult {
  Pose pose;                          ///< IMU body in world
  Mat6 hessian = Mat6::Zero();        ///< tangent ordering (rotation, translation)
  double correspondence_rate = 0.0;   ///< gated matches / source size, at the final pose
  int iterations = 0;
  bool converged = false;
  double final_cost = 0.0;            ///< mean gated Mahalanobis cost
};

struct GicpSettings {
  double gate = 0.5;                    ///< correspondence distance gate [m]
  int max_iterations = 30;
  double increment_tolerance = 1e-6;    ///< terminate when the applied step is smaller
  double relative_cost_tolerance = 1e-9;
  int max_step_halvings = 8;
  int min_correspondences = 10;
  int covariance_neighbors = 20;
};

struct DeskewedCloud {
  ScanCloud cloud;
  bool trajectory_applied = false;  ///< false means identity deskew fallback
};

/// Undoes intra-sweep motion distortion. Every point is first mapped into the
/// IMU frame, then transformed by the trajectory pose nearest to its emission
/// time (translation extrapolated at constant velocity over the residual time
/// difference), and finally re-expressed in the predicted end-of-sweep frame.
/// An empty trajectory degrades to the extrinsics-only transform.
inline DeskewedCloud deskew(const ScanCloud& cloud, const PreintegrationTrajectory& traj,
                            const Pose& predicted, const Extrinsics& extrinsics) {
  DeskewedCloud out;
  out.cloud.timestamp = cloud.timestamp;
  out.cloud.points.reserve(cloud.size());

  if (traj.empty() || cloud.empty()) {
    for (const auto& p : cloud.points)
      out.cloud.points.push_back({extrinsics.T_imu_lidar * p.position, p.time_offset, p.intensity});
    return out;
  }

  out.trajectory_applied = true;
  const double sweep_start = cloud.timestamp - cloud.sweep_duration();
  const Pose predicted_inv = predicted.inverse();
  for (const auto& p : cloud.points) {
    const double t = sweep_start + p.time_offset;
    const NavState& s = traj.nearest(t);
    const Vec3 p_imu = extrinsics.T_imu_lidar * p.position;
    const Vec3 world = s.pose.rotation * p_imu + s.pose.translation + s.velocity * (t - s.timestamp);
    out.cloud.points.push_back({predicted_inv * world, p.time_offset, p.intensity});
  }
  return out;
}

namespace detail {

struct GicpCorrespondences {
  std::vector<int> source;
  std::vector<int> target;
  std::vector<Mat3> weights;   // (C_q + R C_p R^T)^-1
  size_t gated = 0;
  double mean_cost = std::numeric_limits<double>::infinity();
};

inline GicpCorrespondences gicp_associate(const std::vector<Vec3>& source,
                                          const std::vector<Mat3>& source_covs,
                                          const MapCloud& map, const Pose& pose, double gate) {
  GicpCorrespondences c;
  const Mat3& r = pose.rotation.matrix();
  double cost = 0.0;
  for (size_t i = 0; i < source.size(); ++i) {
    const Vec3 transformed = pose * source[i];
    const auto [j, dist] = map.nearest_neighbor(transformed);
    if (dist > gate) continue;
    const Mat3 weight = (map.covariances()[static_cast<size_t>(j)] +
                         r * source_covs[i] * r.transpose())
                            .inverse();
    const Vec3 d = map.points()[static_cast<size_t>(j)] - transformed;
    cost += d.dot(weight * d);
    c.source.push_back(static_cast<int>(i));
    c.target.push_back(j);
    c.weights.push_back(weight);
  }
  c.gated = c.source.size();
  if (c.gated > 0) c.mean_cost = cost / static_cast<double>(c.gated);
  return c;
}

/// H = sum J^T W J and b = sum J^T W r with J = [R skew(p), -I].
inline void gicp_normal_equations(const std::vector<Vec3>& source, const MapCloud& map,
                                  const GicpCorrespondences& c, const Pose& pose, Mat6& h,
                                  Vec6& b) {
  h.setZero();
  b.setZero();
  const Mat3& r = pose.rotation.matrix();
  for (size_t n = 0; n < c.gated; ++n) {
    const Vec3& p = source[static_cast<size_t>(c.source[n])];
    const Vec3 residual = map.points()[static_cast<size_t>(c.target[n])] - pose * p;
    Eigen::Matrix<double, 3, 6> jac;
    jac.leftCols<3>() = r * skew(p);
    jac.rightCols<3>() = -Mat3::Identity();
    const Eigen::Matrix<double, 6, 3> jtw = jac.transpose() * c.weights[n];
    h.noalias() += jtw * jac;
    b.noalias() += jtw * residual;
  }
}

/// Minimum-norm solution of H x = rhs for symmetric PSD H; directions with
/// eigenvalues below 1e-12 * lambda_max are left untouched, which keeps the
/// step well defined on degenerate (e.g. single-plane) geometry.
inline Vec6 solve_psd_pinv(const Mat6& h, const Vec6& rhs) {
  Eigen::SelfAdjointEigenSolver<Mat6> eig(h);
  const auto& evals = eig.eigenvalues();
  const double floor = evals(5) * 1e-12;
  Vec6 inv = Vec6::Zero();
  for (int i = 0; i < 6; ++i)
    if (evals(i) > floor && evals(i) > 0.0) inv(i) = 1.0 / evals(i);
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose() * rhs;
}

}  // namespace detail

/// Registers a (deskewed, body-frame) scan against the local map from the
/// given initial pose. Throws RegistrationError when fewer than
/// `min_correspondences` points survive the gate.
inline MatchResult gicp_align(const ScanCloud& source, const MapCloud& map, const Pose& initial,
                              const GicpSettings& settings = {}) {
  if (source.empty()) throw RegistrationError("gicp_align: empty source cloud");

  std::vector<Vec3> points;
  points.reserve(source.size());
  for (const auto& p : source.points) points.push_back(p.position);
  const std::vector<Mat3> source_covs =
      estimate_point_covariances(points, settings.covariance_neighbors);

  Pose pose = initial;
  auto corr = detail::gicp_associate(points, source_covs, map, pose, settings.gate);
  if (corr.gated < static_cast<size_t>(settings.min_correspondences))
    throw RegistrationError("gicp_align: only " + std::to_string(corr.gated) +
                            " gated correspondences");

  MatchResult result;
  Mat6 h;
  Vec6 b;
  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    detail::gicp_normal_equations(points, map, corr, pose, h, b);
    if (!h.allFinite() || !std::isfinite(corr.mean_cost))
      throw std::runtime_error("gicp_align: non-finite cost");
    const Vec6 delta = detail::solve_psd_pinv(h, -b);

    // Step halving against the candidate's own gated mean cost.
    double step = 1.0;
    bool accepted = false;
    Pose candidate;
    detail::GicpCorrespondences corr_candidate;
    for (int halving = 0; halving <= settings.max_step_halvings; ++halving) {
      candidate = boxplus(pose, (step * delta).eval());
      corr_candidate = detail::gicp_associate(points, source_covs, map, candidate, settings.gate);
      if (corr_candidate.gated >= static_cast<size_t>(settings.min_correspondences) &&
          corr_candidate.mean_cost <= corr.mean_cost * (1.0 + 1e-12)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const double decrease = (corr.mean_cost - corr_candidate.mean_cost) /
                            std::max(corr.mean_cost, std::numeric_limits<double>::min());
    pose = candidate;
    corr = std::move(corr_candidate);
    ++result.iterations;
    if ((step * delta).norm() < settings.increment_tolerance ||
        decrease < settings.relative_cost_tolerance) {
      result.converged = true;
      break;
    }
  }

  detail::gicp_normal_equations(points, map, corr, pose, h, b);
  result.pose = pose;
  result.hessian = 0.5 * (h + h.transpose());
  result.correspondence_rate =
      static_cast<double>(corr.gated) / static_cast<double>(source.size());
  result.final_cost = corr.mean_cost;
  return result;
}

}  // namespace klio
