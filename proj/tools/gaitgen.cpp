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

// gaitgen: solves one periodic gait per speed and writes a gait library.

#include <cmath>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hzdhlip/gaitgen.hpp"
#include "hzdhlip/io.hpp"

namespace {

using hzdhlip::InvalidArgument;

/// "a:step:b" (inclusive) or a comma-separated list.
std::vector<double> parse_speeds(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(spec);
    for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(std::stod(tok));
    if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0]) {
      throw InvalidArgument("--speeds: expected start:step:stop with step > 0");
    }
    const int n = static_cast<int>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
    for (int i = 0; i <= n; ++i) out.push_back(std::round((parts[0] + i * parts[1]) * 1e12) / 1e12);
  } else {
    std::stringstream ss(spec);
    for (std::string tok; std::getline(ss, tok, ',');) out.push_back(std::stod(tok));
  }
  if (out.empty()) throw InvalidArgument("--speeds: no speeds given");
  return out;
}

void apply_request_overrides(hzdhlip::GaitRequest& r, const hzdhlip::io::json& j) {
  const auto set = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  set("com_height", r.com_height);
  set("clearance", r.clearance);
  set("friction", r.friction);
  set("nodes", r.nodes);
  set("degree", r.degree);
  set("eps_hlip_p", r.eps_hlip_p);
  set("eps_hlip_v", r.eps_hlip_v);
  set("eps_z", r.eps_z);
  set("touchdown_velocity", r.touchdown_velocity);
  set("torso_limit", r.torso_limit);
  set("max_joint_velocity", r.max_joint_velocity);
  set("w_cot", r.w_cot);
  set("w_torque", r.w_torque);
  set("power_smoothing", r.power_smoothing);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate a speed-indexed gait library"};
  std::string model_path, out_path, speeds = "0.0:0.1:0.5", config_path;
  double period = 0.25;
  bool verbose = false;
  app.add_option("--model", model_path, "robot model JSON (default: built-in desk model)");
  app.add_option("--speeds", speeds, "start:step:stop or comma list [m/s]")->capture_default_str();
  app.add_option("--period", period, "single-support period T_ssp [s]")->capture_default_str();
  app.add_option("--config", config_path, "JSON overrides for the gait request");
  app.add_option("--out", out_path, "output gait library JSON")->required();
  app.add_flag("-v,--verbose", verbose, "log solver progress");
  CLI11_PARSE(app, argc, argv);

  try {
    hzdhlip::log::set_level(verbose ? hzdhlip::log::Level::Info : hzdhlip::log::Level::Warn);
    const hzdhlip::RobotModel model =
        model_path.empty() ? hzdhlip::RobotModel::desk_default() : hzdhlip::io::load_model(model_path);
    hzdhlip::GaitRequest base;
    base.t_ssp = period;
    if (!config_path.empty()) apply_request_overrides(base, hzdhlip::io::read_json(config_path));
    const std::vector<double> v = parse_speeds(speeds);
    hzdhlip::GaitLibrary lib = hzdhlip::generate_library(model, base, v);
    hzdhlip::io::write_json(out_path, hzdhlip::io::library_to_json(lib));
    for (const auto& g : lib.gaits) {
      std::cout << "v = " << g.v_des << ": residual " << g.report.max_violation << ", cost " << g.cost
                << ", " << g.report.solve_seconds << " s\n";
    }
    std::cout << "wrote " << lib.gaits.size() << " gaits to " << out_path << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "gaitgen: " << e.what() << '\n';
    return 1;
  }
}
