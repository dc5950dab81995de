// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT
//
// Minimal `key = value` file format with [section] headers and '#' comments,
// shared by the runtime configuration and the simulator scenarios. Readers
// pull the keys they know and then reject whatever is left, so typos surface
// with their line number.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "klio/geometry.hpp"

namespace klio {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class KeyValueFile {
 public:
  static KeyValueFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_text(buffer.str(), path);
  }

  static KeyValueFile parse_text(const std::string& text, const std::string& name = "<text>") {
    KeyValueFile kv;
    kv.name_ = name;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']')
          throw ConfigError(name + ":" + std::to_string(line_no) + ": malformed section header");
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw ConfigError(name + ":" + std::to_string(line_no) + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (!kv.entries_.emplace(full, Entry{value, line_no, false}).second)
        throw ConfigError(name + ":" + std::to_string(line_no) + ": duplicate key '" + full + "'");
    }
    return kv;
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    return parse_number<double>(*e, key);
  }

  int64_t get_int(const std::string& key, int64_t fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    return parse_number<int64_t>(*e, key);
  }

  uint64_t get_u64(const std::string& key, uint64_t fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    return parse_number<uint64_t>(*e, key);
  }

  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    std::istringstream in(e->value);
    Vec3 v;
    if (!(in >> v.x() >> v.y() >> v.z()))
      throw ConfigError(location(key, *e) + ": expected three numbers");
    std::string rest;
    if (in >> rest) throw ConfigError(location(key, *e) + ": trailing content '" + rest + "'");
    return v;
  }

  /// Throws on the first key nobody asked for.
  void ensure_all_consumed() const {
    for (const auto& [key, entry] : entries_) {
      if (!entry.consumed)
        throw ConfigError(name_ + ":" + std::to_string(entry.line) + ": unknown key '" + key + "'");
    }
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    mutable bool consumed = false;
  };

  const Entry* find(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.consumed = true;
    return &it->second;
  }

  std::string location(const std::string& key, const Entry& e) const {
    return name_ + ":" + std::to_string(e.line) + ": key '" + key + "'";
  }

  template <typename T>
  T parse_number(const Entry& e, const std::string& key) const {
    std::istringstream in(e.value);
    T v{};
    std::string rest;
    if (!(in >> v) || (in >> rest))
      throw ConfigError(location(key, e) + ": cannot parse '" + e.value + "' as a number");
    return v;
  }

  static std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
  }

  std::string name_;
  std::map<std::string, Entry> entries_;
};

}  // namespace klio
