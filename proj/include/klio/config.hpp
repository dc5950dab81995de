// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT

#pragma once

#include <sstream>
#include <string>

#include "klio/ekf.hpp"
#include "klio/key_value.hpp"
#include "klio/scan_matching.hpp"

namespace klio {

/// Runtime configuration of the odometry pipeline. Every value has a default;
/// a config file only needs the keys it overrides.
struct Config {
  NoiseParams noise;              // q, gravity
  MeasurementNoise measurement;   // sigma_p^2, sigma_v^2, sigma_w^2, sigma_a^2
  GicpSettings gicp;              // epsilon gate, iteration limits, k
  double voxel_resolution = 0.1;  // r [m]
  double gamma_threshold = 0.8;   // gamma_th
  size_t local_map_keyframes = 20;  // N
  size_t imu_buffer_capacity = 4000;
  double max_imu_gap = 0.5;        // [s]
  size_t min_scan_points = 100;    // reject sparser scans after downsampling
  double init_window = 1.0;        // [s] of accelerometer data for gravity alignment
  Vec3 extrinsic_translation = Vec3::Zero();  // T_imu_lidar
  Vec3 extrinsic_rpy = Vec3::Zero();          // roll, pitch, yaw [rad]

  Extrinsics extrinsics() const {
    const Rotation r = Rotation::exp(Vec3(0, 0, extrinsic_rpy.z())) *
                       Rotation::exp(Vec3(0, extrinsic_rpy.y(), 0)) *
                       Rotation::exp(Vec3(extrinsic_rpy.x(), 0, 0));
    return Extrinsics{Pose(r, extrinsic_translation)};
  }

  static Config from_file(const std::string& path) {
    return from_key_values(KeyValueFile::parse_file(path));
  }

  static Config from_key_values(const KeyValueFile& kv) {
    Config c;
    c.noise.q = kv.get_double("noise.q", c.noise.q);
    c.noise.gravity = kv.get_vec3("noise.gravity", c.noise.gravity);
    c.measurement.sigma_p_sq = kv.get_double("noise.sigma_p_sq", c.measurement.sigma_p_sq);
    c.measurement.sigma_v_sq = kv.get_double("noise.sigma_v_sq", c.measurement.sigma_v_sq);
    c.measurement.sigma_omega_sq =
        kv.get_double("noise.sigma_omega_sq", c.measurement.sigma_omega_sq);
    c.measurement.sigma_a_sq = kv.get_double("noise.sigma_a_sq", c.measurement.sigma_a_sq);

    c.voxel_resolution = kv.get_double("matcher.voxel_resolution", c.voxel_resolution);
    c.gicp.gate = kv.get_double("matcher.gate", c.gicp.gate);
    c.gicp.max_iterations =
        static_cast<int>(kv.get_int("matcher.max_iterations", c.gicp.max_iterations));
    c.gicp.covariance_neighbors = static_cast<int>(
        kv.get_int("matcher.covariance_neighbors", c.gicp.covariance_neighbors));
    c.gicp.min_correspondences = static_cast<int>(
        kv.get_int("matcher.min_correspondences", c.gicp.min_correspondences));

    c.gamma_threshold = kv.get_double("mapping.gamma_threshold", c.gamma_threshold);
    c.local_map_keyframes = kv.get_u64("mapping.local_map_keyframes", c.local_map_keyframes);

    c.imu_buffer_capacity = kv.get_u64("pipeline.imu_buffer_capacity", c.imu_buffer_capacity);
    c.max_imu_gap = kv.get_double("pipeline.max_imu_gap", c.max_imu_gap);
    c.min_scan_points = kv.get_u64("pipeline.min_scan_points", c.min_scan_points);
    c.init_window = kv.get_double("pipeline.init_window", c.init_window);
    c.extrinsic_translation = kv.get_vec3("pipeline.extrinsic_translation", c.extrinsic_translation);
    c.extrinsic_rpy = kv.get_vec3("pipeline.extrinsic_rpy", c.extrinsic_rpy);

    kv.ensure_all_consumed();
    return c;
  }

  /// Serializes the fully resolved configuration (re-parseable; written next
  /// to every run's outputs for reproducibility).
  std::string to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "[noise]\n"
        << "q = " << noise.q << "                # process noise scale, Q = q I\n"
        << "gravity = " << noise.gravity.x() << " " << noise.gravity.y() << " "
        << noise.gravity.z() << "\n"
        << "sigma_p_sq = " << measurement.sigma_p_sq << "      # pose block scale on H^-1\n"
        << "sigma_v_sq = " << measurement.sigma_v_sq << "\n"
        << "sigma_omega_sq = " << measurement.sigma_omega_sq << "\n"
        << "sigma_a_sq = " << measurement.sigma_a_sq << "\n"
        << "\n[matcher]\n"
        << "voxel_resolution = " << voxel_resolution << "   # r [m]\n"
        << "gate = " << gicp.gate << "               # epsilon [m]\n"
        << "max_iterations = " << gicp.max_iterations << "\n"
        << "covariance_neighbors = " << gicp.covariance_neighbors << "\n"
        << "min_correspondences = " << gicp.min_correspondences << "\n"
        << "\n[mapping]\n"
        << "gamma_threshold = " << gamma_threshold << "    # gamma_th\n"
        << "local_map_keyframes = " << local_map_keyframes << "  # N\n"
        << "\n[pipeline]\n"
        << "imu_buffer_capacity = " << imu_buffer_capacity << "\n"
        << "max_imu_gap = " << max_imu_gap << "\n"
        << "min_scan_points = " << min_scan_points << "\n"
        << "init_window = " << init_window << "\n"
        << "extrinsic_translation = " << extrinsic_translation.x() << " "
        << extrinsic_translation.y() << " " << extrinsic_translation.z() << "\n"
        << "extrinsic_rpy = " << extrinsic_rpy.x() << " " << extrinsic_rpy.y() << " "
        << extrinsic_rpy.z() << "\n";
    return out.str();
  }
};

}  // namespace klio
