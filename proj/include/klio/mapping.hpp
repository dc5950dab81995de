// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Keyframe bookkeeping and local-map reconstruction. A scan becomes a
// keyframe when its correspondence rate drops below the threshold; the local
// map is rebuilt from the N keyframes nearest to the current position.

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "klio/map_cloud.hpp"
#include "klio/point_cloud.hpp"

namespace klio {

struct Keyframe {
  uint64_t id = 0;
  Pose pose;        ///< world frame, posterior at insertion time
  ScanCloud cloud;  ///< deskewed, body frame
};

class KeyframeSet {
 public:
  const Keyframe& insert(const Pose& pose, ScanCloud cloud) {
    if (cloud.empty()) throw std::invalid_argument("KeyframeSet: empty keyframe cloud");
    frames_.push_back({next_id_++, pose, std::move(cloud)});
    return frames_.back();
  }

  size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  const std::vector<Keyframe>& frames() const { return frames_; }

  /// Indices of the n keyframes nearest to `center` (Euclidean distance on
  /// translations, ties broken by lower id).
  std::vector<size_t> nearest(const Vec3& center, size_t n) const {
    std::vector<size_t> order(frames_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    const size_t count = std::min(n, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(count), order.end(),
                      [&](size_t a, size_t b) {
                        const double da = (frames_[a].pose.translation - center).squaredNorm();
                        const double db = (frames_[b].pose.translation - center).squaredNorm();
                        if (da != db) return da < db;
                        return frames_[a].id < frames_[b].id;
                      });
    order.resize(count);
    return order;
  }

 private:
  std::vector<Keyframe> frames_;
  uint64_t next_id_ = 0;
};

/// True when the correspondence rate falls strictly below the threshold, or
/// when the set is still empty (bootstrap).
inline bool should_insert_keyframe(double gamma, double gamma_th, const KeyframeSet& set) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("should_insert_keyframe: gamma outside [0,1]");
  return set.empty() || gamma < gamma_th;
}

/// Rebuilds the registration target from the min(n, |set|) keyframes nearest
/// to `center`: their clouds are transformed into the world frame, merged,
/// voxel-downsampled, and indexed with fresh surface covariances.
inline MapCloud build_local_map(const KeyframeSet& set, const Vec3& center, size_t n,
                                double voxel_resolution,
                                int k_neighbors = kDefaultCovarianceNeighbors) {
  if (set.empty()) throw EmptyMapError("build_local_map: empty keyframe set");

  ScanCloud merged;
  for (size_t idx : set.nearest(center, n)) {
    const Keyframe& kf = set.frames()[idx];
    for (const auto& p : kf.cloud.points)
      merged.points.push_back({kf.pose * p.position, 0.0, p.intensity});
  }
  const ScanCloud filtered = voxel_downsample(merged, voxel_resolution);

  std::vector<Vec3> points;
  points.reserve(filtered.size());
  for (const auto& p : filtered.points) points.push_back(p.position);
  return MapCloud(std::move(points), k_neighbors);
}

}  // namespace klio
