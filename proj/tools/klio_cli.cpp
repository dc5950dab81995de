// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Command-line driver: `simulate` writes a synthetic dataset, `run` replays a
// dataset through the odometry pipeline, `eval` compares two trajectories.
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "klio/klio.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir) {
  const klio::Scenario scenario = klio::Scenario::from_file(scenario_path);
  const klio::SimulatedDataset dataset = klio::simulate_dataset(scenario);

  fs::create_directories(fs::path(out_dir) / "scans");
  klio::write_imu_csv(dataset.imu, (fs::path(out_dir) / "imu.csv").string());
  char name[64];
  for (size_t i = 0; i < dataset.scans.size(); ++i) {
    std::snprintf(name, sizeof(name), "scan_%06zu.klio", i);
    klio::write_scan(dataset.scans[i], (fs::path(out_dir) / "scans" / name).string());
  }
  klio::write_trajectory(dataset.ground_truth, (fs::path(out_dir) / "groundtruth.tum").string());

  size_t points = 0;
  for (const auto& s : dataset.scans) points += s.size();
  std::cout << "wrote " << dataset.imu.size() << " imu samples, " << dataset.scans.size()
            << " scans (" << points << " points), " << dataset.ground_truth.size()
            << " ground-truth poses to " << out_dir << "\n";
  return 0;
}

std::string bool_cell(bool v) { return v ? "1" : "0"; }

int cmd_run(const std::string& dataset_dir, const std::string& out_dir,
            const std::string& config_path) {
  const klio::Config config =
      config_path.empty() ? klio::Config{} : klio::Config::from_file(config_path);

  int out_of_order = 0;
  const std::vector<klio::ImuSample> imu =
      klio::read_imu_csv((fs::path(dataset_dir) / "imu.csv").string(), &out_of_order);
  if (out_of_order > 0)
    std::cerr << "warning: " << out_of_order << " out-of-order imu rows were re-sorted\n";

  std::vector<fs::path> scan_paths;
  const fs::path scans_dir = fs::path(dataset_dir) / "scans";
  if (!fs::is_directory(scans_dir)) throw klio::IoError("missing scan directory " + scans_dir.string());
  for (const auto& entry : fs::directory_iterator(scans_dir))
    if (entry.path().extension() == ".klio") scan_paths.push_back(entry.path());
  std::sort(scan_paths.begin(), scan_paths.end());
  if (scan_paths.empty()) throw klio::IoError("no .klio scans in " + scans_dir.string());

  fs::create_directories(out_dir);
  {
    std::ofstream resolved((fs::path(out_dir) / "config_resolved.cfg").string());
    resolved << config.to_text();
  }

  klio::Pipeline pipeline(config);
  size_t imu_index = 0;
  std::vector<klio::StampedPose> trajectory;
  for (const auto& path : scan_paths) {
    const klio::ScanCloud cloud = klio::read_scan(path.string());
    while (imu_index < imu.size() && imu[imu_index].timestamp <= cloud.timestamp)
      pipeline.push_imu(imu[imu_index++]);
    const klio::OdometryRecord record = pipeline.process_scan(cloud);
    trajectory.push_back({record.timestamp, record.state.pose});
  }

  klio::write_trajectory(trajectory, (fs::path(out_dir) / "trajectory.tum").string());

  // Per-scan log.
  {
    std::ofstream log((fs::path(out_dir) / "log.csv").string());
    log << "timestamp,px,py,pz,qx,qy,qz,qw,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz,"
           "gamma,iterations,converged,final_cost,keyframe,registration_failed,"
           "degenerate,prediction_fallback";
    for (int i = 0; i < klio::kStateDim; ++i) log << ",cov_d" << i;
    log << "\n";
    for (const auto& r : pipeline.records()) {
      const Eigen::Quaterniond q = r.state.pose.rotation.quaternion();
      const double cells[17] = {r.timestamp,
                                r.state.pose.translation.x(),
                                r.state.pose.translation.y(),
                                r.state.pose.translation.z(),
                                q.x(),
                                q.y(),
                                q.z(),
                                q.w(),
                                r.state.velocity.x(),
                                r.state.velocity.y(),
                                r.state.velocity.z(),
                                r.state.gyro_bias.x(),
                                r.state.gyro_bias.y(),
                                r.state.gyro_bias.z(),
                                r.state.accel_bias.x(),
                                r.state.accel_bias.y(),
                                r.state.accel_bias.z()};
      for (int i = 0; i < 17; ++i) log << (i ? "," : "") << klio::detail::format_shortest(cells[i]);
      log << ',' << klio::detail::format_shortest(r.correspondence_rate) << ',' << r.iterations
          << ',' << bool_cell(r.converged) << ',' << klio::detail::format_shortest(r.final_cost)
          << ',' << bool_cell(r.keyframe_inserted) << ',' << bool_cell(r.registration_failed)
          << ',' << bool_cell(r.degenerate_scan) << ',' << bool_cell(r.prediction_fallback);
      for (int i = 0; i < klio::kStateDim; ++i)
        log << ',' << klio::detail::format_shortest(r.covariance_diagonal(i));
      log << "\n";
    }
  }

  // Global map for visual inspection: every keyframe cloud in world frame.
  {
    klio::ScanCloud merged;
    for (const auto& kf : pipeline.keyframes().frames())
      for (const auto& p : kf.cloud.points)
        merged.points.push_back({kf.pose * p.position, 0.0, p.intensity});
    const klio::ScanCloud filtered = klio::voxel_downsample(merged, config.voxel_resolution);
    std::vector<klio::Vec3> points;
    std::vector<float> intensities;
    for (const auto& p : filtered.points) {
      points.push_back(p.position);
      intensities.push_back(p.intensity);
    }
    klio::write_ply(points, &intensities, (fs::path(out_dir) / "map.ply").string());
  }

  const klio::RunSummary summary = pipeline.finalize();
  std::cout << "processed " << summary.scans << " scans, " << summary.keyframes << " keyframes, "
            << summary.registration_failures << " registration failures, "
            << summary.degenerate_scans << " degenerate scans\n";
  if (summary.registration_failures * 10 > summary.scans) {
    std::cerr << "error: more than 10% of scans failed registration\n";
    return 1;
  }
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& ref_path, double max_dt,
             const std::string& csv_path, const std::vector<double>& extrinsic) {
  std::vector<klio::StampedPose> est = klio::read_trajectory(est_path);
  const std::vector<klio::StampedPose> ref = klio::read_trajectory(ref_path);

  if (!extrinsic.empty()) {
    if (extrinsic.size() != 7)
      throw klio::ConfigError("--extrinsic expects 7 values: tx ty tz qx qy qz qw");
    const klio::Pose t(klio::Rotation::from_quaternion(Eigen::Quaterniond(
                           extrinsic[6], extrinsic[3], extrinsic[4], extrinsic[5])),
                       klio::Vec3(extrinsic[0], extrinsic[1], extrinsic[2]));
    for (auto& r : est) r.pose = r.pose * t;  // output frame under the estimated body pose
  }

  const klio::ApeStats stats = klio::evaluate_ape(est, ref, max_dt);
  std::printf("pairs = %zu\n", stats.pairs);
  std::printf("ape_rmse_m = %.9g\n", stats.rmse);
  std::printf("ape_mean_m = %.9g\n", stats.mean);
  std::printf("ape_max_m = %.9g\n", stats.max);
  std::printf("rot_rmse_deg = %.9g\n", stats.rot_rmse_deg);

  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    csv << "timestamp,ape_m\n";
    for (size_t i = 0; i < stats.errors.size(); ++i)
      csv << klio::detail::format_shortest(stats.timestamps[i]) << ','
          << klio::detail::format_shortest(stats.errors[i]) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"klio: LiDAR-inertial odometry with an EKF backend"};
  app.require_subcommand(1);

  std::string scenario_path, sim_out;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  simulate->add_option("scenario", scenario_path, "scenario file")->required();
  simulate->add_option("out_dir", sim_out, "output directory")->required();

  std::string dataset_dir, run_out, config_path;
  auto* run = app.add_subcommand("run", "run odometry over a dataset");
  run->add_option("dataset_dir", dataset_dir, "dataset directory")->required();
  run->add_option("out_dir", run_out, "output directory")->required();
  run->add_option("--config", config_path, "configuration file (defaults when omitted)");

  std::string est_path, ref_path, csv_path;
  double max_dt = 0.02;
  std::vector<double> extrinsic;
  auto* eval = app.add_subcommand("eval", "compare a trajectory against a reference");
  eval->add_option("estimate", est_path, "estimated trajectory (TUM)")->required();
  eval->add_option("reference", ref_path, "reference trajectory (TUM)")->required();
  eval->add_option("--max-dt", max_dt, "association window [s]");
  eval->add_option("--csv", csv_path, "write per-pose errors to this CSV");
  eval->add_option("--extrinsic", extrinsic,
                   "output-frame transform under the estimated pose: tx ty tz qx qy qz qw")
      ->expected(7);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(scenario_path, sim_out);
    if (run->parsed()) return cmd_run(dataset_dir, run_out, config_path);
    return cmd_eval(est_path, ref_path, max_dt, csv_path, extrinsic);
  } catch (const klio::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
