// Copyright 2026 The hzdhlip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON documents for robot models and gait libraries.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hzdhlip/errors.hpp"
#include "hzdhlip/gait.hpp"
#include "hzdhlip/robot_model.hpp"

#ifndef HZDHLIP_VERSION
#define HZDHLIP_VERSION "0.0.0"
#endif

namespace hzdhlip::io {

using json = nlohmann::json;

inline constexpr int kGaitLibraryFormat = 1;

inline json link_to_json(const LinkParams& l) {
  return {{"mass", l.mass}, {"length", l.length}, {"com_offset", l.com_offset}, {"inertia", l.inertia}};
}

inline LinkParams link_from_json(const json& j) {
  return {j.at("mass").get<double>(), j.at("length").get<double>(), j.at("com_offset").get<double>(),
          j.at("inertia").get<double>()};
}

inline json model_to_json(const RobotModel& m) {
  return {{"torso", link_to_json(m.torso)},
          {"thigh", link_to_json(m.left_thigh)},
          {"shank", link_to_json(m.left_shank)},
          {"gravity", m.gravity},
          {"hip_torque_limit", m.hip_torque_limit},
          {"knee_torque_limit", m.knee_torque_limit},
          {"hip_range", {m.hip_range.lower, m.hip_range.upper}},
          {"knee_range", {m.knee_range.lower, m.knee_range.upper}}};
}

inline RobotModel model_from_json(const json& j) {
  try {
    RobotModel m;
    m.torso = link_from_json(j.at("torso"));
    m.left_thigh = m.right_thigh = link_from_json(j.at("thigh"));
    m.left_shank = m.right_shank = link_from_json(j.at("shank"));
    m.gravity = j.value("gravity", 9.81);
    m.hip_torque_limit = j.at("hip_torque_limit").get<double>();
    m.knee_torque_limit = j.at("knee_torque_limit").get<double>();
    m.hip_range = {j.at("hip_range").at(0).get<double>(), j.at("hip_range").at(1).get<double>()};
    m.knee_range = {j.at("knee_range").at(0).get<double>(), j.at("knee_range").at(1).get<double>()};
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("robot model: ") + e.what());
  }
}

/// 64-bit FNV-1a of the canonical model document, as 16 hex digits.
inline std::string model_hash(const RobotModel& m) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : model_to_json(m).dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows ? static_cast<int>(j.at(0).size()) : 0;
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j.at(i).size()) != cols) throw InvalidArgument("matrix: ragged rows");
    for (int c = 0; c < cols; ++c) M(i, c) = j.at(i).at(c).get<double>();
  }
  return M;
}

inline json gait_to_json(const Gait& g) {
  json names = json::array();
  for (const char* n : OutputSet::kNames) names.push_back(n);
  const auto& r = g.report;
  return {{"v_des", g.v_des},
          {"t_ssp", g.t_ssp},
          {"com_height", g.com_height},
          {"outputs", names},
          {"alpha", matrix_to_json(g.outputs.alpha())},
          {"z_hlip", {g.z_hlip.p, g.z_hlip.v}},
          {"l_nominal", g.l_nominal},
          {"cost", g.cost},
          {"report",
           {{"converged", r.converged},
            {"max_violation", r.max_violation},
            {"worst_constraint", r.worst_constraint},
            {"outer_iterations", r.outer_iterations},
            {"inner_iterations", r.inner_iterations},
            {"solve_seconds", r.solve_seconds},
            {"impact_output_error", r.impact_output_error},
            {"impact_velocity_error", r.impact_velocity_error}}},
          {"trajectory", matrix_to_json(g.trajectory)},
          {"impact", {g.impact(0), g.impact(1), g.impact(2), g.impact(3)}}};
}

inline Gait gait_from_json(const json& j) {
  Gait g;
  g.v_des = j.at("v_des").get<double>();
  g.t_ssp = j.at("t_ssp").get<double>();
  g.com_height = j.at("com_height").get<double>();
  const auto& names = j.at("outputs");
  for (std::size_t i = 0; i < OutputSet::kNames.size(); ++i) {
    if (names.at(i).get<std::string>() != OutputSet::kNames[i]) {
      throw InvalidArgument("gait: unexpected output ordering");
    }
  }
  g.outputs = OutputSet::from_alpha(matrix_from_json(j.at("alpha")));
  g.z_hlip = {j.at("z_hlip").at(0).get<double>(), j.at("z_hlip").at(1).get<double>()};
  g.l_nominal = j.at("l_nominal").get<double>();
  g.cost = j.value("cost", 0.0);
  if (j.contains("report")) {
    const auto& r = j["report"];
    g.report.converged = r.value("converged", false);
    g.report.max_violation = r.value("max_violation", 0.0);
    g.report.worst_constraint = r.value("worst_constraint", "");
    g.report.outer_iterations = r.value("outer_iterations", 0);
    g.report.inner_iterations = r.value("inner_iterations", 0);
    g.report.solve_seconds = r.value("solve_seconds", 0.0);
    g.report.impact_output_error = r.value("impact_output_error", 0.0);
    g.report.impact_velocity_error = r.value("impact_velocity_error", 0.0);
  }
  g.trajectory = matrix_from_json(j.at("trajectory"));
  if (g.trajectory.cols() != 14) throw InvalidArgument("gait: trajectory rows must hold (q, dq, u)");
  for (int i = 0; i < 4; ++i) g.impact(i) = j.at("impact").at(i).get<double>();
  return g;
}

inline json library_to_json(const GaitLibrary& lib) {
  json gaits = json::array();
  for (const auto& g : lib.gaits) gaits.push_back(gait_to_json(g));
  return {{"format", kGaitLibraryFormat},
          {"tool_version", HZDHLIP_VERSION},
          {"model_hash", lib.model_hash},
          {"t_ssp", lib.t_ssp},
          {"degree", lib.degree},
          {"gaits", gaits}};
}

inline GaitLibrary library_from_json(const json& j) {
  try {
    if (j.at("format").get<int>() != kGaitLibraryFormat) {
      throw InvalidArgument("gait library: unsupported format version");
    }
    GaitLibrary lib;
    lib.model_hash = j.at("model_hash").get<std::string>();
    lib.t_ssp = j.at("t_ssp").get<double>();
    lib.degree = j.at("degree").get<int>();
    for (const auto& g : j.at("gaits")) lib.gaits.push_back(gait_from_json(g));
    lib.validate();
    return lib;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("gait library: ") + e.what());
  }
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline RobotModel load_model(const std::string& path) { return model_from_json(read_json(path)); }

/// Loads a library and checks it was generated for `model`.
inline GaitLibrary load_library(const std::string& path, const RobotModel& model) {
  GaitLibrary lib = library_from_json(read_json(path));
  if (lib.model_hash != model_hash(model)) {
    throw InvalidArgument(path + ": gait library was generated for a different robot model");
  }
  return lib;
}

/// printf-style "%.9e" formatting used by every CSV writer.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

}  // namespace hzdhlip::io
