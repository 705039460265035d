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

#pragma once

// Experiment profiles: a JSON description of one closed-loop run together with
// the assertions it must satisfy.

#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hzdhlip/io.hpp"
#include "hzdhlip/sim.hpp"

namespace hzdhlip {

struct ProfileAssertions {
  std::optional<int> min_steps;
  int transient = 10;                             // steps ignored by the statistics
  std::optional<Eigen::Vector2d> preimpact_std;  // (m, m/s)
  std::optional<double> tracking_error;           // [m/s]
  std::optional<int> recover_steps;
  std::optional<Eigen::Vector2d> portrait_margin;  // (m, m/s)
};

struct Profile {
  std::string name = "run";
  SimConfig sim;
  bool regulate = true;
  ProfileAssertions checks;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline TerrainProfile terrain_from_json(const io::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "flat") return TerrainProfile::flat();
  if (type == "random_steps") {
    return TerrainProfile::random_steps(j.at("amplitude").get<double>(), j.value("segment", 0.15),
                                        j.value("ramp", 0.05), j.value("x_start", 0.3),
                                        j.value("x_end", 20.0), j.value("seed", 1u));
  }
  if (type == "step") {
    return TerrainProfile::single_step(j.at("x").get<double>(), j.at("height").get<double>(),
                                       j.value("ramp", 0.05));
  }
  if (type == "vertices") {
    return TerrainProfile(j.at("vertices").get<std::vector<std::pair<double, double>>>());
  }
  throw InvalidArgument("profile: unknown terrain type '" + type + "'");
}

}  // namespace detail

inline Profile profile_from_json(const io::json& j) {
  try {
    Profile p;
    p.name = j.value("name", p.name);
    SimConfig& s = p.sim;
    if (j.contains("speed")) {
      const auto& v = j.at("speed");
      if (v.is_number()) {
        s.speed = SpeedSchedule::constant(v.get<double>());
      } else {
        s.speed.segments = v.get<std::vector<std::pair<double, double>>>();
        if (s.speed.segments.empty()) throw InvalidArgument("profile: empty speed schedule");
      }
    }
    s.max_steps = j.value("max_steps", s.max_steps);
    s.max_time = j.value("max_time", s.max_time);
    s.dt = j.value("dt", s.dt);
    s.control_period = j.value("control_period", s.control_period);
    s.seed = j.value("seed", s.seed);
    if (j.contains("terrain")) s.terrain = detail::terrain_from_json(j.at("terrain"));
    for (const auto& d : j.value("disturbances", io::json::array())) {
      s.disturbances.push_back(
          {d.at("time").get<double>(), d.value("delta_v", 0.0), d.value("force", 0.0), d.value("duration", 0.0)});
    }
    p.regulate = j.value("regulate", true);
    if (j.contains("assert")) {
      const auto& a = j.at("assert");
      ProfileAssertions& c = p.checks;
      c.transient = a.value("transient", c.transient);
      if (a.contains("min_steps")) c.min_steps = a.at("min_steps").get<int>();
      if (a.contains("tracking_error")) c.tracking_error = a.at("tracking_error").get<double>();
      if (a.contains("recover_steps")) c.recover_steps = a.at("recover_steps").get<int>();
      const auto pair = [&](const char* key) -> std::optional<Eigen::Vector2d> {
        if (!a.contains(key)) return std::nullopt;
        const auto v = a.at(key).get<std::vector<double>>();
        if (v.size() != 2) throw InvalidArgument(std::string("profile: ") + key + " needs two values");
        return Eigen::Vector2d(v[0], v[1]);
      };
      c.preimpact_std = pair("preimpact_std");
      c.portrait_margin = pair("portrait_margin");
    }
    if (p.checks.recover_steps && s.disturbances.empty()) {
      throw InvalidArgument("profile: recover_steps needs a disturbance");
    }
    s.validate();
    return p;
  } catch (const io::json::exception& e) {
    throw InvalidArgument(std::string("profile: ") + e.what());
  }
}

/// Largest distance by which a nominal orbit node lies outside the band of
/// simulated COM samples at the same phase, per coordinate. Steps before
/// `transient` are ignored. Non-positive components mean the band encloses the
/// orbit.
inline Eigen::Vector2d portrait_excess(const SimLog& log, const RobotModel& model, const Gait& gait,
                                       int transient) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto curve = orbit_curve(model, gait);
  const double half = 0.5 / (gait.nodes() - 1);
  Eigen::Vector2d worst(-kInf, -kInf);
  for (const auto& [tau, c] : curve) {
    Eigen::Vector2d lo(kInf, kInf), hi(-kInf, -kInf);
    for (const auto& r : log.ticks) {
      if (r.tel.step < transient || std::abs(r.tel.tau - tau) > half) continue;
      const Eigen::Vector2d x(r.tel.com.pos(0), r.tel.com.vel(0));
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
    if (lo(0) > hi(0)) return {kInf, kInf};
    const Eigen::Vector2d z = c.vec();
    worst = worst.cwiseMax((lo - z).cwiseMax(z - hi));
  }
  return worst;
}

inline std::string describe_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::string describe_pair(const Eigen::Vector2d& v) {
  std::ostringstream os;
  os << '(' << v(0) << ", " << v(1) << ')';
  return os.str();
}

/// Evaluates every assertion of `p` on a finished run.
inline std::vector<CheckResult> check_profile(const Profile& p, const SimLog& log, const RobotModel& model,
                                              const GaitLibrary& lib) {
  std::vector<CheckResult> out;
  const ProfileAssertions& c = p.checks;
  const InterpolatedGait final_gait = interpolate_gait(lib, p.sim.speed.segments.back().second);
  if (c.min_steps) {
    std::ostringstream os;
    os << log.steps_survived() << " steps, " << to_string(log.termination);
    if (!log.diagnostic.empty()) os << " (" << log.diagnostic << ")";
    out.push_back({"survived >= " + std::to_string(*c.min_steps) + " steps", log.steps_survived() >= *c.min_steps,
                   os.str()});
  }
  if (c.preimpact_std) {
    const PreimpactStats st = preimpact_stats(log, c.transient);
    const Eigen::Vector2d sd = st.variance.cwiseSqrt();
    out.push_back({"pre-impact spread below " + describe_pair(*c.preimpact_std),
                   st.samples > 1 && (sd.array() < c.preimpact_std->array()).all(),
                   "std " + describe_pair(sd) + " over " + std::to_string(st.samples) + " steps"});
  }
  if (c.portrait_margin) {
    const Gait g = lib.nearest(final_gait.v_cmd);
    const Eigen::Vector2d e = portrait_excess(log, model, g, c.transient) - *c.portrait_margin;
    out.push_back({"phase portrait band encloses the nominal orbit", (e.array() <= 0.0).all(),
                   "worst excess beyond margin " + describe_pair(e)});
  }
  if (c.tracking_error) {
    const TrackingSummary t = velocity_tracking(log, p.sim.speed, c.transient);
    std::ostringstream os;
    os << "max error " << t.max_error << " m/s over " << t.steps_checked << " steps";
    out.push_back({"velocity tracked within " + describe_value(*c.tracking_error) + " m/s",
                   t.steps_checked > 0 && t.max_error <= *c.tracking_error, os.str()});
  }
  if (c.recover_steps) {
    const double t_push = p.sim.disturbances.front().time;
    const int n = steps_to_recover(log, t_push, final_gait.z_hlip);
    out.push_back({"recovered within " + std::to_string(*c.recover_steps) + " steps",
                   n >= 0 && n <= *c.recover_steps && !log.fell(),
                   n < 0 ? std::string("never recovered") : std::to_string(n) + " steps"});
  }
  return out;
}

inline ControllerConfig profile_controller(const Profile& p, const GaitLibrary& lib) {
  ControllerConfig c = default_controller(lib);
  c.regulator.enabled = p.regulate;
  return c;
}

inline SimLog run_profile(const Profile& p, const RobotModel& model, const GaitLibrary& lib) {
  return simulate_walking(model, lib, profile_controller(p, lib), p.sim);
}

}  // namespace hzdhlip
