// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// File formats:
//   - IMU CSV: `timestamp_s,gx,gy,gz,ax,ay,az`, header optional
//   - scan binary: magic "KLIO", u32 version, f64 timestamp, u64 count,
//     then per point x,y,z,time_offset,intensity as f32 (little-endian)
//   - trajectories: TUM-style `timestamp tx ty tz qx qy qz qw`
//   - PLY export (ascii / binary_little_endian) with x y z intensity
// Writers are deterministic byte streams; readers reject trailing garbage.

#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "klio/geometry.hpp"
#include "klio/imu.hpp"
#include "klio/point_cloud.hpp"

namespace klio {

static_assert(std::endian::native == std::endian::little,
              "serialized formats assume a little-endian host");

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string format_shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r')) --end;
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end && begin != end;
}

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError(std::string("truncated while reading ") + what);
  return v;
}

}  // namespace detail

// --- IMU CSV ---------------------------------------------------------------

/// Reads an IMU stream. An unparseable first line is accepted as the header;
/// any other malformed row fails with its line number. Out-of-order rows are
/// counted into `out_of_order` (when given) and stably sorted.
inline std::vector<ImuSample> read_imu_csv(const std::string& path,
                                           int* out_of_order = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::vector<ImuSample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split(line, ',');
    bool ok = fields.size() == 7;
    ImuSample s;
    double values[7];
    if (ok) {
      for (int i = 0; i < 7 && ok; ++i) ok = detail::parse_double(fields[i], values[i]);
    }
    if (!ok) {
      if (line_no == 1) continue;  // header
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed IMU row");
    }
    s.timestamp = values[0];
    s.gyro = Vec3(values[1], values[2], values[3]);
    s.accel = Vec3(values[4], values[5], values[6]);
    samples.push_back(s);
  }

  int inversions = 0;
  for (size_t i = 1; i < samples.size(); ++i)
    if (samples[i].timestamp < samples[i - 1].timestamp) ++inversions;
  if (inversions > 0) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const ImuSample& a, const ImuSample& b) { return a.timestamp < b.timestamp; });
  }
  if (out_of_order) *out_of_order = inversions;
  return samples;
}

inline void write_imu_csv(const std::vector<ImuSample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "timestamp_s,gx,gy,gz,ax,ay,az\n";
  for (const auto& s : samples) {
    out << detail::format_shortest(s.timestamp);
    for (const double v : {s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(),
                           s.accel.z()})
      out << ',' << detail::format_shortest(v);
    out << '\n';
  }
}

// --- Binary scan format ------------------------------------------------------

inline constexpr char kScanMagic[4] = {'K', 'L', 'I', 'O'};
inline constexpr uint32_t kScanFormatVersion = 1;

inline void write_scan(const ScanCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kScanMagic, 4);
  detail::write_raw(out, kScanFormatVersion);
  detail::write_raw(out, cloud.timestamp);
  detail::write_raw(out, static_cast<uint64_t>(cloud.points.size()));
  for (const auto& p : cloud.points) {
    detail::write_raw(out, static_cast<float>(p.position.x()));
    detail::write_raw(out, static_cast<float>(p.position.y()));
    detail::write_raw(out, static_cast<float>(p.position.z()));
    detail::write_raw(out, static_cast<float>(p.time_offset));
    detail::write_raw(out, p.intensity);
  }
}

inline ScanCloud read_scan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kScanMagic, 4) != 0)
    throw IoError(path + ": bad scan magic");
  const auto version = detail::read_raw<uint32_t>(in, "version");
  if (version != kScanFormatVersion)
    throw IoError(path + ": unsupported scan format version " + std::to_string(version));
  ScanCloud cloud;
  cloud.timestamp = detail::read_raw<double>(in, "timestamp");
  const auto count = detail::read_raw<uint64_t>(in, "point count");
  cloud.points.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const float x = detail::read_raw<float>(in, "point");
    const float y = detail::read_raw<float>(in, "point");
    const float z = detail::read_raw<float>(in, "point");
    const float offset = detail::read_raw<float>(in, "point");
    const float intensity = detail::read_raw<float>(in, "point");
    cloud.points.push_back({Vec3(x, y, z), static_cast<double>(offset), intensity});
  }
  if (in.peek() != std::ifstream::traits_type::eof())
    throw IoError(path + ": trailing bytes after point payload");
  return cloud;
}

// --- PLY export --------------------------------------------------------------

/// Writes points (with optional per-point intensity, zero otherwise) as PLY
/// for viewing. Export only; nothing in the pipeline reads PLY back.
inline void write_ply(const std::vector<Vec3>& points, const std::vector<float>* intensities,
                      const std::string& path, bool binary = true) {
  if (intensities && intensities->size() != points.size())
    throw std::invalid_argument("write_ply: intensity count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "ply\n"
      << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "element vertex " << points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\nproperty float intensity\n"
      << "end_header\n";
  for (size_t i = 0; i < points.size(); ++i) {
    const float v[4] = {static_cast<float>(points[i].x()), static_cast<float>(points[i].y()),
                        static_cast<float>(points[i].z()),
                        intensities ? (*intensities)[i] : 0.0f};
    if (binary) {
      out.write(reinterpret_cast<const char*>(v), sizeof(v));
    } else {
      out << v[0] << ' ' << v[1] << ' ' << v[2] << ' ' << v[3] << '\n';
    }
  }
}

// --- TUM trajectories ---------------------------------------------------------

inline void write_trajectory(const std::vector<StampedPose>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  char buf[256];
  for (const auto& r : records) {
    const Eigen::Quaterniond q = r.pose.rotation.quaternion();
    std::snprintf(buf, sizeof(buf), "%.6f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", r.timestamp,
                  r.pose.translation.x(), r.pose.translation.y(), r.pose.translation.z(), q.x(),
                  q.y(), q.z(), q.w());
    out << buf;
  }
}

inline std::vector<StampedPose> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<StampedPose> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[0] == '#') continue;
    std::istringstream row(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(row >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed trajectory line");
    }
    std::string rest;
    if (row >> rest)
      throw IoError(path + ":" + std::to_string(line_no) + ": trailing content '" + rest + "'");
    records.push_back(
        {t, Pose(Rotation::from_quaternion(Eigen::Quaterniond(qw, qx, qy, qz)), Vec3(tx, ty, tz))});
  }
  return records;
}

}  // namespace klio
