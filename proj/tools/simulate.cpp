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

// simulate: runs one closed-loop experiment profile and writes CSV logs.
// Exit status: 0 if every assertion of the profile holds, 1 if one fails,
// 2 on bad input.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hzdhlip/io.hpp"
#include "hzdhlip/profile.hpp"

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw hzdhlip::InvalidArgument("cannot write " + p.string());
  return os;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate the walking controller on one experiment profile"};
  std::string gaits_path, model_path, profile_path, out_dir;
  bool verbose = false;
  app.add_option("--gaits", gaits_path, "gait library JSON")->required()->check(CLI::ExistingFile);
  app.add_option("--model", model_path, "robot model JSON (default: built-in desk model)")
      ->check(CLI::ExistingFile);
  app.add_option("--profile", profile_path, "experiment profile JSON")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_flag("-v,--verbose", verbose, "log controller warnings");
  CLI11_PARSE(app, argc, argv);

  namespace fs = std::filesystem;
  using namespace hzdhlip;
  try {
    log::set_level(verbose ? log::Level::Info : log::Level::Warn);
    const RobotModel model = model_path.empty() ? RobotModel::desk_default() : io::load_model(model_path);
    const GaitLibrary lib = io::load_library(gaits_path, model);
    const Profile profile = profile_from_json(io::read_json(profile_path));

    const SimLog log = run_profile(profile, model, lib);
    const std::vector<CheckResult> checks = check_profile(profile, log, model, lib);

    fs::create_directories(out_dir);
    {
      auto os = open_out(fs::path(out_dir) / "ticks.csv");
      write_ticks_csv(os, log);
    }
    {
      auto os = open_out(fs::path(out_dir) / "steps.csv");
      write_steps_csv(os, log);
    }
    {
      const Gait& g = lib.nearest(profile.sim.speed.segments.back().second);
      auto os = open_out(fs::path(out_dir) / "phase_portrait.csv");
      write_phase_portrait_csv(os, log, model, &g);
    }

    io::json summary{{"profile", profile.name},
                     {"termination", to_string(log.termination)},
                     {"diagnostic", log.diagnostic},
                     {"steps_survived", log.steps_survived()},
                     {"end_time", log.end_time},
                     {"ik_failures", log.ik_failures},
                     {"checks", io::json::array()}};
    bool ok = true;
    std::cout << profile.name << ": " << log.steps_survived() << " steps, " << to_string(log.termination)
              << '\n';
    for (const auto& c : checks) {
      ok = ok && c.pass;
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
      summary["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    summary["pass"] = ok;
    io::write_json((fs::path(out_dir) / "summary.json").string(), summary);
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "simulate: " << e.what() << '\n';
    return 2;
  }
}
