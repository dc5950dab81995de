// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT

#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "klio/geometry.hpp"

namespace klio {

struct ScanPoint {
  Vec3 position = Vec3::Zero();  ///< [m], sensor frame
  double time_offset = 0.0;      ///< seconds since the start of the sweep
  float intensity = 0.0f;
};

/// A timestamped LiDAR sweep. The cloud timestamp is the end of the sweep;
/// per-point offsets are measured from the sweep start, so a point's absolute
/// time is `timestamp - sweep_duration() + time_offset`.
struct ScanCloud {
  double timestamp = 0.0;
  std::vector<ScanPoint> points;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  /// Sweep duration recovered from the largest per-point offset.
  double sweep_duration() const {
    double max_offset = 0.0;
    for (const auto& p : points) max_offset = std::max(max_offset, p.time_offset);
    return max_offset;
  }
};

namespace detail {

struct VoxelKey {
  int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  size_t operator()(const VoxelKey& k) const {
    // FNV-style mix of the three packed coordinates.
    uint64_t h = 1469598103934665603ull;
    for (uint64_t v : {static_cast<uint64_t>(k.x), static_cast<uint64_t>(k.y),
                       static_cast<uint64_t>(k.z)}) {
      h ^= v;
      h *= 1099511628211ull;
    }
    return static_cast<size_t>(h);
  }
};

inline VoxelKey voxel_key(const Vec3& p, double resolution) {
  return VoxelKey{static_cast<int64_t>(std::floor(p.x() / resolution)),
                  static_cast<int64_t>(std::floor(p.y() / resolution)),
                  static_cast<int64_t>(std::floor(p.z() / resolution))};
}

}  // namespace detail

/// Voxel grid filter: one output point per occupied voxel, placed at the
/// centroid of the member points; time offsets and intensities are averaged.
/// Output order follows the first appearance of each voxel, which keeps the
/// result deterministic.
inline ScanCloud voxel_downsample(const ScanCloud& cloud, double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("voxel_downsample: resolution must be > 0");

  struct Accum {
    Vec3 sum = Vec3::Zero();
    double offset_sum = 0.0;
    double intensity_sum = 0.0;
    size_t count = 0;
  };

  std::unordered_map<detail::VoxelKey, size_t, detail::VoxelKeyHash> index;
  std::vector<Accum> cells;
  index.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    const auto key = detail::voxel_key(p.position, resolution);
    auto [it, inserted] = index.try_emplace(key, cells.size());
    if (inserted) cells.emplace_back();
    Accum& a = cells[it->second];
    a.sum += p.position;
    a.offset_sum += p.time_offset;
    a.intensity_sum += p.intensity;
    ++a.count;
  }

  ScanCloud out;
  out.timestamp = cloud.timestamp;
  out.points.reserve(cells.size());
  for (const Accum& a : cells) {
    const double inv = 1.0 / static_cast<double>(a.count);
    out.points.push_back({a.sum * inv, a.offset_sum * inv, static_cast<float>(a.intensity_sum * inv)});
  }
  return out;
}

/// Rigidly transforms every point of a scan (offsets and intensities kept).
inline ScanCloud transformed(const ScanCloud& cloud, const Pose& t) {
  ScanCloud out = cloud;
  for (auto& p : out.points) p.position = t * p.position;
  return out;
}

}  // namespace klio
