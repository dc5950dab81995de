// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "klio/kdtree.hpp"
#include "klio/map_cloud.hpp"
#include "klio/point_cloud.hpp"

using namespace klio;

namespace {

std::set<std::tuple<int64_t, int64_t, int64_t>> occupancy(const ScanCloud& cloud, double res) {
  std::set<std::tuple<int64_t, int64_t, int64_t>> keys;
  for (const auto& p : cloud.points) {
    keys.insert({static_cast<int64_t>(std::floor(p.position.x() / res)),
                 static_cast<int64_t>(std::floor(p.position.y() / res)),
                 static_cast<int64_t>(std::floor(p.position.z() / res))});
  }
  return keys;
}

ScanCloud random_cloud(std::mt19937_64& rng, size_t n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  ScanCloud cloud;
  for (size_t i = 0; i < n; ++i) cloud.points.push_back({Vec3(u(rng), u(rng), u(rng)), 0.0, 0.0f});
  return cloud;
}

int linear_nearest(const std::vector<Vec3>& points, const Vec3& q) {
  int best = 0;
  double best_sq = (points[0] - q).squaredNorm();
  for (size_t i = 1; i < points.size(); ++i) {
    const double d = (points[i] - q).squaredNorm();
    if (d < best_sq) {
      best_sq = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

TEST(VoxelDownsample, CentroidOfSharedVoxel) {
  ScanCloud cloud;
  cloud.points.push_back({Vec3(0.01, 0, 0), 0.0, 2.0f});
  cloud.points.push_back({Vec3(0.03, 0, 0), 0.02, 4.0f});
  const ScanCloud out = voxel_downsample(cloud, 0.1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_LT((out.points[0].position - Vec3(0.02, 0, 0)).norm(), 1e-12);
  EXPECT_NEAR(out.points[0].time_offset, 0.01, 1e-12);
  EXPECT_NEAR(out.points[0].intensity, 3.0f, 1e-6);
}

TEST(VoxelDownsample, UnitCubeAtHalfResolution) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScanCloud cloud;
  for (int i = 0; i < 1000; ++i) cloud.points.push_back({Vec3(u(rng), u(rng), u(rng)), 0.0, 0.0f});
  const ScanCloud out = voxel_downsample(cloud, 0.5);
  EXPECT_EQ(out.size(), occupancy(cloud, 0.5).size());
  EXPECT_EQ(out.size(), 8u);
}

TEST(VoxelDownsample, IdempotentOccupancy) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const ScanCloud cloud = random_cloud(rng, 500, 3.0);
    const ScanCloud once = voxel_downsample(cloud, 0.25);
    const ScanCloud twice = voxel_downsample(once, 0.25);
    EXPECT_EQ(occupancy(once, 0.25), occupancy(twice, 0.25));
    EXPECT_EQ(once.size(), twice.size());
    EXPECT_LE(once.size(), cloud.size());
  }
}

TEST(VoxelDownsample, RejectsBadResolution) {
  EXPECT_THROW(voxel_downsample(ScanCloud{}, 0.0), std::invalid_argument);
}

TEST(KdTree, SinglePointMap) {
  const KdTree tree({Vec3(1, 2, 3)});
  const auto [idx, dist] = tree.nearest(Vec3(0, 0, 0));
  EXPECT_EQ(idx, 0);
  EXPECT_NEAR(dist, std::sqrt(14.0), 1e-12);
}

TEST(KdTree, MatchesLinearScan) {
  std::mt19937_64 rng(7);
  const ScanCloud cloud = random_cloud(rng, 1000, 10.0);
  std::vector<Vec3> pts;
  for (const auto& p : cloud.points) pts.push_back(p.position);
  const KdTree tree(pts);
  std::uniform_real_distribution<double> u(-12.0, 12.0);
  for (int q = 0; q < 100; ++q) {
    const Vec3 query(u(rng), u(rng), u(rng));
    const auto [idx, dist] = tree.nearest(query);
    EXPECT_EQ(idx, linear_nearest(pts, query));
    EXPECT_NEAR(dist, (pts[static_cast<size_t>(idx)] - query).norm(), 1e-12);
  }
}

TEST(KdTree, ExactOnVariousSizes) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (size_t n : {size_t{2}, size_t{17}, size_t{129}, size_t{2000}}) {
    std::vector<Vec3> pts;
    for (size_t i = 0; i < n; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
    const KdTree tree(pts);
    for (int q = 0; q < 50; ++q) {
      const Vec3 query(u(rng), u(rng), u(rng));
      EXPECT_EQ(tree.nearest(query).first, linear_nearest(pts, query));
    }
  }
}

TEST(KdTree, QueryAtMapPointHasZeroDistance) {
  std::mt19937_64 rng(13);
  const ScanCloud cloud = random_cloud(rng, 200, 5.0);
  std::vector<Vec3> pts;
  for (const auto& p : cloud.points) pts.push_back(p.position);
  const KdTree tree(pts);
  const auto [idx, dist] = tree.nearest(pts[57]);
  EXPECT_EQ(idx, 57);
  EXPECT_EQ(dist, 0.0);
}

TEST(KdTree, KnnMatchesSortOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
  const KdTree tree(pts);
  for (int q = 0; q < 20; ++q) {
    const Vec3 query(u(rng), u(rng), u(rng));
    const auto got = tree.knn(query, 12);
    std::vector<int> expected(pts.size());
    std::iota(expected.begin(), expected.end(), 0);
    std::sort(expected.begin(), expected.end(), [&](int a, int b) {
      return (pts[static_cast<size_t>(a)] - query).squaredNorm() <
             (pts[static_cast<size_t>(b)] - query).squaredNorm();
    });
    expected.resize(12);
    EXPECT_EQ(got, expected);
  }
}

TEST(KdTree, EmptyQueriesThrow) {
  const KdTree tree;
  EXPECT_THROW(tree.nearest(Vec3::Zero()), std::runtime_error);
}

TEST(PointCovariances, PlaneNormalRecovered) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(Vec3(u(rng), u(rng), 0.0));
  const auto covs = estimate_point_covariances(pts, 20);
  for (const auto& c : covs) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(c);
    const Vec3 normal = eig.eigenvectors().col(0);
    EXPECT_GT(std::abs(normal.z()), 1.0 - 1e-9);
    EXPECT_NEAR(eig.eigenvalues()(0), 1e-3, 1e-9);
  }
}

TEST(PointCovariances, IsotropicBlob) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 1000; ++i) pts.push_back(Vec3(n(rng), n(rng), n(rng)));

  // Raw sample covariance of the whole blob stays near-isotropic.
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= 1000.0;
  Mat3 raw = Mat3::Zero();
  for (const auto& p : pts) raw += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> raw_eig(raw / 1000.0);
  EXPECT_LT(raw_eig.eigenvalues()(2) / raw_eig.eigenvalues()(0), 1.5);

  const auto covs = estimate_point_covariances(pts, 20);
  for (const auto& c : covs) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(c);
    EXPECT_NEAR(eig.eigenvalues()(0), 1e-3, 1e-9);
    EXPECT_NEAR(eig.eigenvalues()(1), 1.0, 1e-9);
    EXPECT_NEAR(eig.eigenvalues()(2), 1.0, 1e-9);
    EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PointCovariances, ErrorsOnTinyClouds) {
  std::vector<Vec3> pts(10, Vec3::Zero());
  EXPECT_THROW(estimate_point_covariances(pts, 20), DegenerateCloudError);
  EXPECT_THROW(estimate_point_covariances(pts, 3), std::invalid_argument);
}

TEST(MapCloud, NearestNeighborAndCaches) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
  const MapCloud map(pts, 10);
  EXPECT_EQ(map.size(), 100u);
  EXPECT_EQ(map.covariances().size(), 100u);
  const auto [idx, dist] = map.nearest_neighbor(Vec3::Zero());
  EXPECT_EQ(idx, linear_nearest(pts, Vec3::Zero()));
  EXPECT_GE(dist, 0.0);
}
