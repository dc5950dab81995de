// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT

#include <gtest/gtest.h>

#include <random>

#include "klio/scan_matching.hpp"
#include "klio/simulator.hpp"
#include "test_fixtures.hpp"

using namespace klio;
using klio::testing::make_corner_cloud;
using klio::testing::make_plane_cloud;
using klio::testing::map_from_cloud;
using klio::testing::random_unit;

namespace {

PreintegrationTrajectory constant_state_trajectory(const Pose& pose, const Vec3& velocity,
                                                   double t0, double t1, double rate) {
  PreintegrationTrajectory traj;
  for (double t = t0; t <= t1 + 1e-12; t += 1.0 / rate) {
    NavState s;
    s.pose = pose;
    s.velocity = velocity;
    s.timestamp = t;
    traj.states.push_back(s);
  }
  return traj;
}

}  // namespace

TEST(Deskew, StationarySensorIsExtrinsicsOnly) {
  ScanCloud cloud;
  cloud.timestamp = 1.0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 50; ++i)
    cloud.points.push_back({Vec3(u(rng), u(rng), u(rng)), 0.002 * i, 1.0f});

  const Pose pose(Rotation::exp(Vec3(0.2, -0.1, 0.5)), Vec3(3, -2, 1));
  Extrinsics ext{Pose(Rotation::exp(Vec3(0, 0, 0.3)), Vec3(0.1, 0.02, -0.05))};
  const auto traj = constant_state_trajectory(pose, Vec3::Zero(), 0.9, 1.0, 200.0);

  const DeskewedCloud out = deskew(cloud, traj, pose, ext);
  ASSERT_TRUE(out.trajectory_applied);
  ASSERT_EQ(out.cloud.size(), cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 expected = ext.T_imu_lidar * cloud.points[i].position;
    EXPECT_LT((out.cloud.points[i].position - expected).norm(), 1e-12);
    EXPECT_EQ(out.cloud.points[i].time_offset, cloud.points[i].time_offset);
  }
}

TEST(Deskew, ConstantVelocityShiftsPointBackward) {
  // Sensor moving +x at 1 m/s, sweep 0.1 s ending at t=1.0. A point captured
  // mid-sweep at sensor-frame (1,0,0) lands 0.05 m behind its naive placement
  // in the end-of-sweep frame.
  const double speed = 1.0;
  PreintegrationTrajectory traj;
  for (int k = 0; k <= 20; ++k) {
    const double t = 0.9 + 0.005 * k;
    NavState s;
    s.pose = Pose(Rotation::identity(), Vec3(speed * t, 0, 0));
    s.velocity = Vec3(speed, 0, 0);
    s.timestamp = t;
    traj.states.push_back(s);
  }
  ScanCloud cloud;
  cloud.timestamp = 1.0;
  cloud.points.push_back({Vec3(1, 0, 0), 0.05, 1.0f});
  cloud.points.push_back({Vec3(2, 0, 0), 0.1, 1.0f});  // pins sweep duration to 0.1

  const Pose predicted(Rotation::identity(), Vec3(speed * 1.0, 0, 0));
  const DeskewedCloud out = deskew(cloud, traj, predicted, Extrinsics{});
  EXPECT_NEAR(out.cloud.points[0].position.x(), 1.0 - 0.05, 1e-9);
  EXPECT_NEAR(out.cloud.points[1].position.x(), 2.0, 1e-9);
}

TEST(Deskew, EmptyTrajectoryFallsBackToIdentity) {
  ScanCloud cloud;
  cloud.timestamp = 1.0;
  cloud.points.push_back({Vec3(1, 2, 3), 0.0, 1.0f});
  const DeskewedCloud out = deskew(cloud, PreintegrationTrajectory{}, Pose::identity(), Extrinsics{});
  EXPECT_FALSE(out.trajectory_applied);
  EXPECT_LT((out.cloud.points[0].position - Vec3(1, 2, 3)).norm(), 1e-12);
}

TEST(Deskew, MovingCaptureMatchesInstantaneousCapture) {
  // Pure translation along a huge plane: ray directions never change, so the
  // per-column hit sets agree and the pointwise comparison is meaningful up
  // to the intra-sweep parallax, which stays below the voxel resolution.
  const double duration = 2.0;
  const auto traj = AnalyticTrajectory::constant_velocity(duration, Pose::identity(),
                                                          Vec3(0, 1.0, 0));
  const PlaneWorld world = PlaneWorld::single_plane(5.0);
  LidarModel model;
  model.beams = 60;
  model.rings = 16;
  const double scan_time = 1.0;

  const ScanCloud moving =
      raycast_scan(world, traj, scan_time, 0.1, model.beams, model.rings, 0.0, 1, model);
  const ScanCloud instant =
      raycast_scan(world, traj, scan_time, 0.0, model.beams, model.rings, 0.0, 1, model);
  ASSERT_EQ(moving.size(), instant.size());

  PreintegrationTrajectory states;
  for (int k = 0; k <= 40; ++k) {
    const double t = scan_time - 0.1 + 0.1 * k / 40.0;
    const TrajectorySample s = traj.sample(t);
    NavState nav;
    nav.pose = s.pose;
    nav.velocity = s.velocity;
    nav.timestamp = t;
    states.states.push_back(nav);
  }
  const DeskewedCloud deskewed = deskew(moving, states, traj.pose(scan_time), Extrinsics{});

  double sum_sq = 0.0, naive_sum_sq = 0.0;
  for (size_t i = 0; i < deskewed.cloud.size(); ++i) {
    sum_sq += (deskewed.cloud.points[i].position - instant.points[i].position).squaredNorm();
    naive_sum_sq += (moving.points[i].position - instant.points[i].position).squaredNorm();
  }
  const double rms = std::sqrt(sum_sq / static_cast<double>(deskewed.cloud.size()));
  const double naive_rms = std::sqrt(naive_sum_sq / static_cast<double>(moving.size()));
  EXPECT_LT(rms, 0.1);
  EXPECT_GT(naive_rms, rms);  // deskewing must actually help
}

TEST(GicpAlign, SelfRegistrationIsIdentity) {
  const ScanCloud corner = make_corner_cloud();
  const MapCloud map = map_from_cloud(corner);
  const MatchResult result = gicp_align(corner, map, Pose::identity());
  EXPECT_TRUE(result.converged);
  EXPECT_LT(result.pose.translation.norm(), 1e-9);
  EXPECT_LT(result.pose.rotation.log().norm(), 1e-9);
  EXPECT_EQ(result.correspondence_rate, 1.0);
}

TEST(GicpAlign, RecoversKnownTransform) {
  const ScanCloud corner = make_corner_cloud();
  const MapCloud map = map_from_cloud(corner);
  // World cloud perturbed: the initial pose is off by (0.3,-0.2,0.1) and 5deg.
  const Pose offset(Rotation::exp(Vec3(0, 0, 5.0 * M_PI / 180.0)), Vec3(0.3, -0.2, 0.1));
  const MatchResult result = gicp_align(corner, map, offset);
  EXPECT_TRUE(result.converged);
  EXPECT_LT(result.pose.translation.norm(), 1e-3);
  EXPECT_LT(result.pose.rotation.log().norm(), 0.01 * M_PI / 180.0);
}

TEST(GicpAlign, SinglePlaneDegeneracy) {
  const ScanCloud plane = make_plane_cloud();
  const MapCloud map = map_from_cloud(plane);
  const MatchResult result = gicp_align(plane, map, Pose::identity());
  Eigen::SelfAdjointEigenSolver<Mat6> eig(result.hessian);
  const auto& v = eig.eigenvalues();
  EXPECT_LT(v(0) / v(5), 1e-6);
  // Two in-plane translations and the rotation about the normal are all
  // near-zero relative to the constrained directions.
  EXPECT_LT(v(2) / v(5), 1e-2);
}

TEST(GicpAlign, CostNonIncreasingAcrossIterations) {
  const ScanCloud corner = make_corner_cloud(2.0, 0.1);
  const MapCloud map = map_from_cloud(corner);
  const Pose offset(Rotation::exp(Vec3(0.02, -0.03, 0.08)), Vec3(0.25, -0.15, 0.1));
  GicpSettings settings;
  settings.increment_tolerance = 0.0;  // keep iterating
  settings.relative_cost_tolerance = 0.0;
  double prev_cost = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 10; ++iters) {
    settings.max_iterations = iters;
    const MatchResult r = gicp_align(corner, map, offset, settings);
    EXPECT_LE(r.final_cost, prev_cost * (1.0 + 1e-9));
    prev_cost = r.final_cost;
  }
}

TEST(GicpAlign, RegistrationEquivariance) {
  const ScanCloud corner = make_corner_cloud(2.0, 0.1);
  std::mt19937_64 rng(41);
  const Pose initial(Rotation::exp(Vec3(0.01, 0.02, -0.03)), Vec3(0.1, -0.05, 0.02));

  const MapCloud map = map_from_cloud(corner);
  const MatchResult base = gicp_align(corner, map, initial);

  const Pose g(Rotation::exp(0.8 * random_unit(rng)), Vec3(4.0, -2.0, 1.5));
  std::vector<Vec3> moved;
  for (const auto& p : map.points()) moved.push_back(g * p);
  const MapCloud moved_map(moved, 20);
  const MatchResult shifted = gicp_align(corner, moved_map, g * initial);

  const Pose expected = g * base.pose;
  EXPECT_LT((shifted.pose.translation - expected.translation).norm(), 1e-6);
  EXPECT_LT((shifted.pose.rotation.inverse() * expected.rotation).log().norm(), 1e-6);
}

TEST(GicpAlign, CorrespondenceRateMatchesBruteForce) {
  const ScanCloud corner = make_corner_cloud(1.0, 0.07);
  const MapCloud map = map_from_cloud(corner);
  // Shift a copy so that some points fall outside the gate.
  ScanCloud source = corner;
  for (size_t i = 0; i < source.points.size(); ++i)
    if (i % 3 == 0) source.points[i].position += Vec3(0, 0, 2.0);  // push out of gate

  GicpSettings settings;
  settings.max_iterations = 0;  // evaluate at the initial pose
  const MatchResult r = gicp_align(source, map, Pose::identity(), settings);

  size_t gated = 0;
  for (const auto& p : source.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : map.points()) best = std::min(best, (q - p.position).norm());
    if (best <= settings.gate) ++gated;
  }
  EXPECT_DOUBLE_EQ(r.correspondence_rate,
                   static_cast<double>(gated) / static_cast<double>(source.size()));
}

TEST(GicpAlign, HessianSymmetricPsd) {
  const ScanCloud corner = make_corner_cloud(2.0, 0.1);
  const MapCloud map = map_from_cloud(corner);
  const MatchResult r =
      gicp_align(corner, map, Pose(Rotation::exp(Vec3(0, 0, 0.05)), Vec3(0.1, 0, 0)));
  EXPECT_LT((r.hessian - r.hessian.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  Eigen::SelfAdjointEigenSolver<Mat6> eig(r.hessian);
  EXPECT_GT(eig.eigenvalues()(0), -1e-9);
}

TEST(GicpAlign, FailsWithoutGatedCorrespondences) {
  const ScanCloud corner = make_corner_cloud(1.0, 0.07);
  const MapCloud map = map_from_cloud(corner);
  const Pose far_away(Rotation::identity(), Vec3(100, 100, 100));
  EXPECT_THROW(gicp_align(corner, map, far_away), RegistrationError);
  EXPECT_THROW(gicp_align(ScanCloud{}, map, Pose::identity()), RegistrationError);
}
