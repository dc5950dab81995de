// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT

#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "klio/geometry.hpp"

namespace klio {

/// Static kd-tree over 3-D points with exact nearest-neighbor and k-NN
/// queries (results identical to a linear scan up to distance ties).
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) return;
    ids_.resize(points_.size());
    std::iota(ids_.begin(), ids_.end(), 0);
    nodes_.reserve(points_.size());
    root_ = build(0, static_cast<int>(points_.size()));
  }

  size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Index and Euclidean distance of the nearest point. Throws on empty tree.
  std::pair<int, double> nearest(const Vec3& query) const {
    if (empty()) throw std::runtime_error("KdTree: nearest query on empty tree");
    int best = -1;
    double best_sq = std::numeric_limits<double>::infinity();
    search_one(root_, query, best, best_sq);
    return {best, std::sqrt(best_sq)};
  }

  /// Indices of the k nearest points, ordered by increasing distance.
  std::vector<int> knn(const Vec3& query, int k) const {
    if (k <= 0) return {};
    std::vector<std::pair<double, int>> heap;  // max-heap on squared distance
    heap.reserve(static_cast<size_t>(k) + 1);
    search_k(root_, query, static_cast<size_t>(k), heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<int> out(heap.size());
    for (size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
    return out;
  }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(int lo, int hi) {
    if (lo >= hi) return -1;
    // Split on the axis of largest spread; the median point becomes the node.
    Vec3 mn = points_[ids_[lo]], mx = mn;
    for (int i = lo + 1; i < hi; ++i) {
      mn = mn.cwiseMin(points_[ids_[i]]);
      mx = mx.cwiseMax(points_[ids_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const int mid = lo + (hi - lo) / 2;
    std::nth_element(ids_.begin() + lo, ids_.begin() + mid, ids_.begin() + hi,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const int node_index = static_cast<int>(nodes_.size());
    nodes_.push_back({ids_[mid], axis, -1, -1});
    const int left = build(lo, mid);
    const int right = build(mid + 1, hi);
    nodes_[node_index].left = left;
    nodes_[node_index].right = right;
    return node_index;
  }

  void search_one(int node_index, const Vec3& q, int& best, double& best_sq) const {
    if (node_index < 0) return;
    const Node& node = nodes_[node_index];
    const double d_sq = (points_[node.point] - q).squaredNorm();
    if (d_sq < best_sq) {
      best_sq = d_sq;
      best = node.point;
    }
    const double plane = q[node.axis] - points_[node.point][node.axis];
    const int near = plane < 0.0 ? node.left : node.right;
    const int far = plane < 0.0 ? node.right : node.left;
    search_one(near, q, best, best_sq);
    if (plane * plane < best_sq) search_one(far, q, best, best_sq);
  }

  void search_k(int node_index, const Vec3& q, size_t k,
                std::vector<std::pair<double, int>>& heap) const {
    if (node_index < 0) return;
    const Node& node = nodes_[node_index];
    const double d_sq = (points_[node.point] - q).squaredNorm();
    if (heap.size() < k) {
      heap.emplace_back(d_sq, node.point);
      std::push_heap(heap.begin(), heap.end());
    } else if (d_sq < heap.front().first) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = {d_sq, node.point};
      std::push_heap(heap.begin(), heap.end());
    }
    const double plane = q[node.axis] - points_[node.point][node.axis];
    const int near = plane < 0.0 ? node.left : node.right;
    const int far = plane < 0.0 ? node.right : node.left;
    search_k(near, q, k, heap);
    if (heap.size() < k || plane * plane < heap.front().first) search_k(far, q, k, heap);
  }

  std::vector<Vec3> points_;
  std::vector<int> ids_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace klio
