// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT

#pragma once

#include <Eigen/Eigenvalues>

#include <stdexcept>
#include <vector>

#include "klio/kdtree.hpp"

namespace klio {

struct DegenerateCloudError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyMapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Default neighborhood size for surface covariance estimation.
inline constexpr int kDefaultCovarianceNeighbors = 20;

/// Eigenvalue assigned to the surface-normal direction after plane
/// regularization of the per-point covariances.
inline constexpr double kPlaneRegularization = 1e-3;

/// Per-point surface covariances for distribution-to-distribution matching:
/// the sample covariance of each point's k nearest neighbors, with the
/// eigenvalues replaced by (1, 1, e) in the eigenbasis. Unregularized
/// covariances make the cost ill-conditioned on flat surfaces.
inline std::vector<Mat3> estimate_point_covariances(const std::vector<Vec3>& points,
                                                    int k_neighbors = kDefaultCovarianceNeighbors) {
  if (k_neighbors < 4)
    throw std::invalid_argument("estimate_point_covariances: k_neighbors must be >= 4");
  if (points.size() < static_cast<size_t>(k_neighbors))
    throw DegenerateCloudError("estimate_point_covariances: cloud smaller than neighborhood (" +
                               std::to_string(points.size()) + " points)");

  const KdTree tree(points);
  std::vector<Mat3> covs(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    const std::vector<int> nn = tree.knn(points[i], k_neighbors);
    Vec3 mean = Vec3::Zero();
    for (int n : nn) mean += points[static_cast<size_t>(n)];
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (int n : nn) {
      const Vec3 d = points[static_cast<size_t>(n)] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nn.size());

    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);  // eigenvalues ascending
    const Mat3& v = eig.eigenvectors();
    covs[i] = kPlaneRegularization * v.col(0) * v.col(0).transpose() +
              v.col(1) * v.col(1).transpose() + v.col(2) * v.col(2).transpose();
  }
  return covs;
}

/// World-frame registration target: points, an exact neighbor index, and the
/// cached per-point covariances. Immutable after construction, so concurrent
/// read-only queries are safe.
class MapCloud {
 public:
  MapCloud(std::vector<Vec3> world_points, int k_neighbors = kDefaultCovarianceNeighbors)
      : tree_(std::move(world_points)) {
    covariances_ = estimate_point_covariances(tree_.points(), k_neighbors);
  }

  size_t size() const { return tree_.size(); }
  bool empty() const { return tree_.empty(); }
  const std::vector<Vec3>& points() const { return tree_.points(); }
  const std::vector<Mat3>& covariances() const { return covariances_; }
  const KdTree& index() const { return tree_; }

  /// Exact nearest neighbor: (index, distance). Throws on an empty map.
  std::pair<int, double> nearest_neighbor(const Vec3& query) const {
    if (empty()) throw EmptyMapError("MapCloud: nearest-neighbor query on empty map");
    return tree_.nearest(query);
  }

 private:
  KdTree tree_;
  std::vector<Mat3> covariances_;
};

}  // namespace klio
