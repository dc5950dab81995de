// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Deterministic sensor simulator: analytic trajectories with closed-form
// derivatives, IMU synthesis (inverse of the propagation kinematics), and
// raycast LiDAR sweeps against a world of rectangular planar patches. The
// analytic intersections double as exact oracles in the tests.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "klio/geometry.hpp"
#include "klio/imu.hpp"
#include "klio/key_value.hpp"
#include "klio/point_cloud.hpp"

namespace klio {

/// Standard-normal sampler on top of mt19937_64 (Box-Muller). The stdlib
/// normal_distribution is implementation-defined, which would break the
/// byte-identical-dataset guarantee across toolchains.
class GaussianSampler {
 public:
  explicit GaussianSampler(uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * M_PI * u2);
  }

  Vec3 next_vec3() {
    const double x = next(), y = next(), z = next();
    return Vec3(x, y, z);
  }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }  // [0, 1)
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct TrajectorySample {
  Pose pose;                                  ///< body in world
  Vec3 velocity = Vec3::Zero();               ///< world frame [m/s]
  Vec3 acceleration = Vec3::Zero();           ///< world frame [m/s^2]
  Vec3 angular_velocity_body = Vec3::Zero();  ///< body frame [rad/s]
};

/// Twice-differentiable pose curve on [0, duration]; evaluation outside the
/// interval clamps to the endpoints.
class AnalyticTrajectory {
 public:
  using Evaluator = std::function<TrajectorySample(double)>;

  AnalyticTrajectory(double duration, Evaluator eval)
      : duration_(duration), eval_(std::move(eval)) {}

  double duration() const { return duration_; }

  TrajectorySample sample(double t) const { return eval_(std::clamp(t, 0.0, duration_)); }
  Pose pose(double t) const { return sample(t).pose; }

  static AnalyticTrajectory rest(double duration, const Pose& pose = Pose::identity()) {
    return AnalyticTrajectory(duration, [pose](double) {
      TrajectorySample s;
      s.pose = pose;
      return s;
    });
  }

  static AnalyticTrajectory constant_velocity(double duration, const Pose& start,
                                              const Vec3& velocity) {
    return AnalyticTrajectory(duration, [start, velocity](double t) {
      TrajectorySample s;
      s.pose = Pose(start.rotation, start.translation + velocity * t);
      s.velocity = velocity;
      return s;
    });
  }

  /// Circular path in the z = height plane, heading along the direction of
  /// travel. Positive angular_rate runs counter-clockwise.
  static AnalyticTrajectory circle(double duration, double radius, double angular_rate,
                                   double height, double phase = 0.0) {
    return AnalyticTrajectory(duration, [=](double t) {
      const double theta = angular_rate * t + phase;
      const double c = std::cos(theta), s = std::sin(theta);
      TrajectorySample out;
      out.pose = Pose(Rotation::exp(Vec3(0, 0, theta + M_PI / 2.0)),
                      Vec3(radius * c, radius * s, height));
      out.velocity = radius * angular_rate * Vec3(-s, c, 0);
      out.acceleration = -radius * angular_rate * angular_rate * Vec3(c, s, 0);
      out.angular_velocity_body = Vec3(0, 0, angular_rate);
      return out;
    });
  }

  /// Figure-eight (x = a sin wt, y = b sin 2wt), heading along travel.
  static AnalyticTrajectory figure_eight(double duration, double half_x, double half_y,
                                         double rate, double height) {
    return AnalyticTrajectory(duration, [=](double t) {
      const double w = rate;
      const Vec3 p(half_x * std::sin(w * t), half_y * std::sin(2 * w * t), height);
      const Vec3 v(half_x * w * std::cos(w * t), 2 * half_y * w * std::cos(2 * w * t), 0);
      const Vec3 a(-half_x * w * w * std::sin(w * t), -4 * half_y * w * w * std::sin(2 * w * t), 0);
      const double yaw = std::atan2(v.y(), v.x());
      const double yaw_rate = (v.x() * a.y() - v.y() * a.x()) / (v.x() * v.x() + v.y() * v.y());
      TrajectorySample out;
      out.pose = Pose(Rotation::exp(Vec3(0, 0, yaw)), p);
      out.velocity = v;
      out.acceleration = a;
      out.angular_velocity_body = Vec3(0, 0, yaw_rate);
      return out;
    });
  }

  /// Yaw rotation in place at a fixed position.
  static AnalyticTrajectory spin(double duration, const Vec3& position, double yaw_rate) {
    return AnalyticTrajectory(duration, [=](double t) {
      TrajectorySample out;
      out.pose = Pose(Rotation::exp(Vec3(0, 0, yaw_rate * t)), position);
      out.angular_velocity_body = Vec3(0, 0, yaw_rate);
      return out;
    });
  }

 private:
  double duration_;
  Evaluator eval_;
};

/// Finite rectangular patch: corner plus two spanning edges.
struct PlanePatch {
  Vec3 origin;
  Vec3 edge_u;
  Vec3 edge_v;

  Vec3 normal() const { return edge_u.cross(edge_v).normalized(); }

  /// Ray-patch intersection distance, if any.
  std::optional<double> intersect(const Vec3& ray_origin, const Vec3& ray_dir, double t_min,
                                  double t_max) const {
    const Vec3 n = edge_u.cross(edge_v);
    const double denom = ray_dir.dot(n);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = (origin - ray_origin).dot(n) / denom;
    if (t < t_min || t > t_max) return std::nullopt;
    const Vec3 local = ray_origin + t * ray_dir - origin;
    const double su = local.dot(edge_u) / edge_u.squaredNorm();
    const double sv = local.dot(edge_v) / edge_v.squaredNorm();
    if (su < 0.0 || su > 1.0 || sv < 0.0 || sv > 1.0) return std::nullopt;
    return t;
  }
};

struct PlaneWorld {
  std::vector<PlanePatch> patches;

  void add(const PlanePatch& patch) {
    if (patch.edge_u.cross(patch.edge_v).norm() < 1e-12)
      throw std::invalid_argument("PlaneWorld: degenerate patch");
    patches.push_back(patch);
  }

  /// Nearest patch hit along the ray, if any.
  std::optional<double> raycast(const Vec3& origin, const Vec3& dir, double t_min,
                                double t_max) const {
    std::optional<double> best;
    for (const auto& patch : patches) {
      if (const auto t = patch.intersect(origin, dir, t_min, t_max))
        if (!best || *t < *best) best = t;
    }
    return best;
  }

  /// A single large vertical wall at x = distance, facing the origin.
  static PlaneWorld single_plane(double distance, double half_extent = 500.0) {
    PlaneWorld w;
    w.add({Vec3(distance, -half_extent, -half_extent), Vec3(0, 2 * half_extent, 0),
           Vec3(0, 0, 2 * half_extent)});
    return w;
  }

  /// The desk-scale benchmark scene: a 40 m x 30 m walled courtyard with a
  /// central pillar and three partition walls (12 patches). The partitions
  /// occlude different regions as the sensor moves, which exercises keyframe
  /// insertion.
  static PlaneWorld courtyard() {
    PlaneWorld w;
    // Floor and boundary walls.
    w.add({Vec3(-20, -15, 0), Vec3(40, 0, 0), Vec3(0, 30, 0)});
    w.add({Vec3(20, -15, 0), Vec3(0, 30, 0), Vec3(0, 0, 4)});
    w.add({Vec3(-20, -15, 0), Vec3(0, 30, 0), Vec3(0, 0, 4)});
    w.add({Vec3(-20, 15, 0), Vec3(40, 0, 0), Vec3(0, 0, 4)});
    w.add({Vec3(-20, -15, 0), Vec3(40, 0, 0), Vec3(0, 0, 4)});
    // Central 8 m x 8 m pillar.
    w.add({Vec3(4, -4, 0), Vec3(0, 8, 0), Vec3(0, 0, 4)});
    w.add({Vec3(-4, -4, 0), Vec3(0, 8, 0), Vec3(0, 0, 4)});
    w.add({Vec3(-4, 4, 0), Vec3(8, 0, 0), Vec3(0, 0, 4)});
    w.add({Vec3(-4, -4, 0), Vec3(8, 0, 0), Vec3(0, 0, 4)});
    // Partition walls near the boundary.
    w.add({Vec3(12, -9, 0), Vec3(0, 8, 0), Vec3(0, 0, 3)});
    w.add({Vec3(-14, 11, 0), Vec3(8, 0, 0), Vec3(0, 0, 3)});
    w.add({Vec3(-16, -11, 0), Vec3(6, 0, 0), Vec3(0, 0, 3)});
    return w;
  }
};

/// Beam geometry of the simulated spinning LiDAR.
struct LidarModel {
  int beams = 90;   ///< azimuth columns over 360 degrees
  int rings = 64;   ///< elevation rows
  double fov_up_deg = 5.0;
  double fov_down_deg = -25.0;
  double min_range = 0.3;
  double max_range = 80.0;
};

/// Synthesizes an IMU stream: body-frame angular rate plus bias and white
/// noise, and specific force R^T (a - g) plus bias and white noise.
/// Deterministic for a fixed seed.
inline std::vector<ImuSample> synth_imu(const AnalyticTrajectory& traj, double rate,
                                        const Vec3& gyro_bias, const Vec3& accel_bias,
                                        double gyro_noise_std, double accel_noise_std,
                                        uint64_t seed, const Vec3& gravity = Vec3(0, 0, -9.81)) {
  if (!(rate > 0.0)) throw std::invalid_argument("synth_imu: rate must be > 0");
  GaussianSampler noise(seed);
  const auto count = static_cast<size_t>(std::floor(traj.duration() * rate));
  std::vector<ImuSample> out;
  out.reserve(count + 1);
  for (size_t k = 0; k <= count; ++k) {
    const double t = static_cast<double>(k) / rate;
    const TrajectorySample s = traj.sample(t);
    ImuSample imu;
    imu.timestamp = t;
    imu.gyro = s.angular_velocity_body + gyro_bias + gyro_noise_std * noise.next_vec3();
    imu.accel = s.pose.rotation.inverse() * (s.acceleration - gravity) + accel_bias +
                accel_noise_std * noise.next_vec3();
    out.push_back(imu);
  }
  return out;
}

/// Casts one sweep ending at scan_time. Each column is emitted from the pose
/// at its own time, uniformly spread over [scan_time - sweep, scan_time];
/// misses are dropped. Per-point offsets count from the sweep start.
inline ScanCloud raycast_scan(const PlaneWorld& world, const AnalyticTrajectory& traj,
                              double scan_time, double sweep, int beams, int rings,
                              double range_noise_std, uint64_t seed,
                              const LidarModel& model = {}) {
  if (sweep < 0.0) throw std::invalid_argument("raycast_scan: negative sweep");
  GaussianSampler noise(seed);
  ScanCloud cloud;
  cloud.timestamp = scan_time;
  cloud.points.reserve(static_cast<size_t>(beams) * static_cast<size_t>(rings));

  const double fov_up = model.fov_up_deg * M_PI / 180.0;
  const double fov_down = model.fov_down_deg * M_PI / 180.0;
  for (int c = 0; c < beams; ++c) {
    const double offset = beams > 1 ? sweep * c / (beams - 1) : 0.0;
    const TrajectorySample s = traj.sample(scan_time - sweep + offset);
    const double az = 2.0 * M_PI * c / beams;
    for (int r = 0; r < rings; ++r) {
      const double el =
          rings > 1 ? fov_down + (fov_up - fov_down) * r / (rings - 1) : 0.5 * (fov_up + fov_down);
      const Vec3 dir_sensor(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                            std::sin(el));
      const Vec3 dir_world = s.pose.rotation * dir_sensor;
      const auto hit = world.raycast(s.pose.translation, dir_world, model.min_range,
                                     model.max_range);
      if (!hit) continue;
      const double range = *hit + range_noise_std * noise.next();
      cloud.points.push_back({range * dir_sensor, offset, 1.0f});
    }
  }
  return cloud;
}

/// A full synthetic recording plus its ground truth.
struct SimulatedDataset {
  std::vector<ImuSample> imu;
  std::vector<ScanCloud> scans;
  std::vector<StampedPose> ground_truth;  ///< body pose at each scan timestamp
};

/// Everything needed to generate a dataset, loadable from a scenario file.
struct Scenario {
  std::string trajectory_family = "circle";
  double duration = 51.0;
  double height = 1.5;
  double radius = 8.0;
  double angular_rate = 2.0 * M_PI / 51.0;
  double phase = 0.0;
  Vec3 start_position = Vec3(0, 0, 1.5);
  Vec3 velocity = Vec3(1, 0, 0);
  double spin_rate = 4.2;
  double eight_half_x = 8.0;
  double eight_half_y = 5.0;
  double eight_rate = 2.0 * M_PI / 60.0;

  double imu_rate = 200.0;
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
  double gyro_noise_std = 0.002;
  double accel_noise_std = 0.02;

  double lidar_rate = 10.0;
  double sweep = 0.1;
  LidarModel lidar;
  double range_noise_std = 0.01;

  std::string world = "courtyard";
  double plane_distance = 5.0;

  uint64_t seed = 1;

  AnalyticTrajectory make_trajectory() const {
    if (trajectory_family == "rest") {
      return AnalyticTrajectory::rest(duration, Pose(Rotation::identity(), start_position));
    }
    if (trajectory_family == "constant_velocity") {
      return AnalyticTrajectory::constant_velocity(
          duration, Pose(Rotation::identity(), start_position), velocity);
    }
    if (trajectory_family == "circle") {
      return AnalyticTrajectory::circle(duration, radius, angular_rate, height, phase);
    }
    if (trajectory_family == "figure_eight") {
      return AnalyticTrajectory::figure_eight(duration, eight_half_x, eight_half_y, eight_rate,
                                              height);
    }
    if (trajectory_family == "spin") {
      return AnalyticTrajectory::spin(duration, start_position, spin_rate);
    }
    throw ConfigError("unknown trajectory family '" + trajectory_family + "'");
  }

  PlaneWorld make_world() const {
    if (world == "courtyard") return PlaneWorld::courtyard();
    if (world == "single_plane") return PlaneWorld::single_plane(plane_distance);
    throw ConfigError("unknown world '" + world + "'");
  }

  static Scenario from_file(const std::string& path) {
    return from_key_values(KeyValueFile::parse_file(path));
  }

  static Scenario from_key_values(const KeyValueFile& kv) {
    Scenario s;
    s.trajectory_family = kv.get_string("trajectory.family", s.trajectory_family);
    s.duration = kv.get_double("trajectory.duration", s.duration);
    s.height = kv.get_double("trajectory.height", s.height);
    s.radius = kv.get_double("trajectory.radius", s.radius);
    s.angular_rate = kv.get_double("trajectory.angular_rate", s.angular_rate);
    s.phase = kv.get_double("trajectory.phase", s.phase);
    s.start_position = kv.get_vec3("trajectory.start_position", s.start_position);
    s.velocity = kv.get_vec3("trajectory.velocity", s.velocity);
    s.spin_rate = kv.get_double("trajectory.spin_rate", s.spin_rate);
    s.eight_half_x = kv.get_double("trajectory.eight_half_x", s.eight_half_x);
    s.eight_half_y = kv.get_double("trajectory.eight_half_y", s.eight_half_y);
    s.eight_rate = kv.get_double("trajectory.eight_rate", s.eight_rate);

    s.imu_rate = kv.get_double("imu.rate", s.imu_rate);
    s.gyro_bias = kv.get_vec3("imu.gyro_bias", s.gyro_bias);
    s.accel_bias = kv.get_vec3("imu.accel_bias", s.accel_bias);
    s.gyro_noise_std = kv.get_double("imu.gyro_noise_std", s.gyro_noise_std);
    s.accel_noise_std = kv.get_double("imu.accel_noise_std", s.accel_noise_std);

    s.lidar_rate = kv.get_double("lidar.rate", s.lidar_rate);
    s.sweep = kv.get_double("lidar.sweep", s.sweep);
    s.lidar.beams = static_cast<int>(kv.get_int("lidar.beams", s.lidar.beams));
    s.lidar.rings = static_cast<int>(kv.get_int("lidar.rings", s.lidar.rings));
    s.lidar.fov_up_deg = kv.get_double("lidar.fov_up_deg", s.lidar.fov_up_deg);
    s.lidar.fov_down_deg = kv.get_double("lidar.fov_down_deg", s.lidar.fov_down_deg);
    s.lidar.min_range = kv.get_double("lidar.min_range", s.lidar.min_range);
    s.lidar.max_range = kv.get_double("lidar.max_range", s.lidar.max_range);
    s.range_noise_std = kv.get_double("lidar.range_noise_std", s.range_noise_std);

    s.world = kv.get_string("world.preset", s.world);
    s.plane_distance = kv.get_double("world.plane_distance", s.plane_distance);

    s.seed = kv.get_u64("run.seed", s.seed);
    kv.ensure_all_consumed();
    return s;
  }
};

/// Generates the full dataset for a scenario. Per-scan raycast seeds are
/// derived from the scenario seed, so the whole dataset is reproducible.
inline SimulatedDataset simulate_dataset(const Scenario& scenario) {
  const AnalyticTrajectory traj = scenario.make_trajectory();
  const PlaneWorld world = scenario.make_world();

  SimulatedDataset out;
  out.imu = synth_imu(traj, scenario.imu_rate, scenario.gyro_bias, scenario.accel_bias,
                      scenario.gyro_noise_std, scenario.accel_noise_std, scenario.seed);

  const auto scan_count = static_cast<size_t>(std::floor(
      (scenario.duration - scenario.sweep) * scenario.lidar_rate));
  const double first_scan = scenario.sweep > 0.0 ? scenario.sweep : 1.0 / scenario.lidar_rate;
  for (size_t k = 0; k <= scan_count; ++k) {
    const double t = first_scan + static_cast<double>(k) / scenario.lidar_rate;
    if (t > scenario.duration + 1e-12) break;
    const uint64_t scan_seed = scenario.seed ^ (0x9e3779b97f4a7c15ull * (k + 1));
    out.scans.push_back(raycast_scan(world, traj, t, scenario.sweep, scenario.lidar.beams,
                                     scenario.lidar.rings, scenario.range_noise_std, scan_seed,
                                     scenario.lidar));
    out.ground_truth.push_back({t, traj.pose(t)});
  }
  return out;
}

}  // namespace klio
