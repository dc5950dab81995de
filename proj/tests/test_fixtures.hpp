// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Shared synthetic fixtures for the unit and acceptance suites.

#pragma once

#include <random>

#include "klio/map_cloud.hpp"
#include "klio/point_cloud.hpp"

namespace klio::testing {

/// Three mutually orthogonal walls meeting at the origin, sampled on a grid.
/// Constrains all six degrees of freedom.
inline ScanCloud make_corner_cloud(double extent = 2.0, double spacing = 0.08) {
  ScanCloud cloud;
  const int n = static_cast<int>(extent / spacing);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double a = i * spacing, b = j * spacing;
      cloud.points.push_back({Vec3(0.0, a, b), 0.0, 1.0f});
      cloud.points.push_back({Vec3(a, 0.0, b), 0.0, 1.0f});
      cloud.points.push_back({Vec3(a, b, 0.0), 0.0, 1.0f});
    }
  }
  return cloud;
}

/// A single large horizontal plane z = 0 sampled on a grid (degenerate
/// registration geometry: both in-plane translations and the rotation about
/// the normal are unconstrained up to the covariance regularization).
inline ScanCloud make_plane_cloud(double half_extent = 60.0, double spacing = 2.0) {
  ScanCloud cloud;
  const int n = static_cast<int>(half_extent / spacing);
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j)
      cloud.points.push_back({Vec3(i * spacing, j * spacing, 0.0), 0.0, 1.0f});
  return cloud;
}

inline std::vector<Vec3> positions(const ScanCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points) out.push_back(p.position);
  return out;
}

inline MapCloud map_from_cloud(const ScanCloud& cloud, int k_neighbors = 20) {
  return MapCloud(positions(cloud), k_neighbors);
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 v(u(rng), u(rng), u(rng));
  while (v.norm() < 1e-3) v = Vec3(u(rng), u(rng), u(rng));
  return v.normalized();
}

}  // namespace klio::testing
