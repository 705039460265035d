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

// Hybrid simulation of the closed-loop planar biped, disturbances, terrain and
// the experiment summaries built on top of it.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hzdhlip/dynamics.hpp"
#include "hzdhlip/errors.hpp"
#include "hzdhlip/hlip.hpp"
#include "hzdhlip/io.hpp"
#include "hzdhlip/regulator.hpp"
#include "hzdhlip/terrain.hpp"

namespace hzdhlip {

// ---------------------------------------------------------------------------
// Configuration

/// COM velocity impulse (duration 0) or horizontal force at the hip over a
/// window.
struct DisturbanceEvent {
  double time = 0.0;
  double delta_v = 0.0;   // [m/s]
  double force = 0.0;     // [N]
  double duration = 0.0;  // [s]

  bool is_impulse() const { return duration == 0.0; }
  void validate() const {
    if (!std::isfinite(time) || !std::isfinite(delta_v) || !std::isfinite(force) ||
        !std::isfinite(duration) || duration < 0.0) {
      throw InvalidArgument("DisturbanceEvent: non-finite or negative-duration event");
    }
  }
};

/// Piecewise-constant speed reference: (start time, speed) pairs.
struct SpeedSchedule {
  std::vector<std::pair<double, double>> segments{{0.0, 0.0}};

  static SpeedSchedule constant(double v) { return {{{0.0, v}}}; }
  double operator()(double t) const {
    double v = segments.front().second;
    for (const auto& [t0, vs] : segments) {
      if (t >= t0) v = vs;
    }
    return v;
  }
};

struct SimConfig {
  double control_period = 1e-3;  // [s]
  double dt = 1e-3;              // integrator step, control_period / dt must be an integer
  double event_tolerance = 1e-9;  // [s]
  int max_steps = 50;
  double max_time = 60.0;
  unsigned seed = 0;
  std::vector<DisturbanceEvent> disturbances;
  TerrainProfile terrain;
  SpeedSchedule speed = SpeedSchedule::constant(0.2);
  double guard_enable_phase = 0.5;  // fraction of T_ssp before touchdown is armed
  double step_timeout = 3.0;        // in units of T_ssp
  double fall_pitch = 1.0;          // [rad]
  double fall_height_ratio = 0.5;
  bool record_ticks = true;

  void validate() const {
    if (!(dt > 0.0)) throw InvalidArgument("SimConfig: dt must be positive");
    const double ratio = control_period / dt;
    if (!(ratio >= 1.0) || std::abs(ratio - std::round(ratio)) > 1e-9) {
      throw InvalidArgument("SimConfig: control period must be a positive multiple of dt");
    }
    if (!(event_tolerance > 0.0 && event_tolerance < dt)) {
      throw InvalidArgument("SimConfig: event tolerance must be in (0, dt)");
    }
    if (max_steps < 0 || !(max_time > 0.0)) throw InvalidArgument("SimConfig: bad run length");
    if (speed.segments.empty()) throw InvalidArgument("SimConfig: empty speed schedule");
    for (const auto& d : disturbances) d.validate();
  }
};

// ---------------------------------------------------------------------------
// Logs

struct TickRecord {
  TickTelemetry tel;
  HybridState state;
  double stance_x = 0.0;  // world stance foot
  double stance_z = 0.0;
};

struct StepRecord {
  long index = 0;
  double t_start = 0.0;
  double duration = 0.0;
  HlipState preimpact;  // COM (x, vx) relative to the stance foot
  double step_length = 0.0;
  double l_command = 0.0;
  double v_cmd = 0.0;
  double mean_velocity = 0.0;  // COM displacement over the step / duration
  double velocity_std = 0.0;   // of the COM vx samples within the step
  double stance_x = 0.0;
  bool impact_valid = true;
  bool survived = true;
};

enum class Termination { StepLimit, TimeLimit, Fall, Stalled, Fault };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::StepLimit: return "step_limit";
    case Termination::TimeLimit: return "time_limit";
    case Termination::Fall: return "fall";
    case Termination::Stalled: return "stalled";
    case Termination::Fault: return "fault";
  }
  return "unknown";
}

struct SimLog {
  std::vector<TickRecord> ticks;
  std::vector<StepRecord> steps;
  Termination termination = Termination::StepLimit;
  std::string diagnostic;
  double end_time = 0.0;
  long ik_failures = 0;
  double max_step_command = 0.0;

  bool fell() const {
    return termination == Termination::Fall || termination == Termination::Stalled ||
           termination == Termination::Fault;
  }
  int steps_survived() const {
    return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) { return s.survived; }));
  }
};

// ---------------------------------------------------------------------------
// Integration

/// Accelerations with an optional horizontal force at the hip.
inline Vec5 closed_loop_accel(const RobotModel& model, const BodyChains& chains, const Vec5& q,
                              const Vec5& dq, const Vec4& u, double hip_force) {
  Vec5 ddq = forward_dynamics_t<double>(model, chains, q, dq, u);
  if (hip_force != 0.0) {
    const auto t = dynamics_terms_t<double>(model, chains, q, dq);
    const auto hip = eval_point<double>(chains.hip, LinkTrig<double>(q, dq));
    ddq += t.D.ldlt().solve(hip.J.row(0).transpose() * hip_force);
  }
  return ddq;
}

/// Classic RK4 over h with constant torque and external force.
inline HybridState rk4_step(const RobotModel& model, const BodyChains& chains, const HybridState& s,
                            const Vec4& u, double hip_force, double h) {
  const auto f = [&](const Vec5& q, const Vec5& dq) {
    return closed_loop_accel(model, chains, q, dq, u, hip_force);
  };
  const Vec5 k1q = s.dq, k1v = f(s.q, s.dq);
  const Vec5 k2q = s.dq + 0.5 * h * k1v, k2v = f(s.q + 0.5 * h * k1q, k2q);
  const Vec5 k3q = s.dq + 0.5 * h * k2v, k3v = f(s.q + 0.5 * h * k2q, k3q);
  const Vec5 k4q = s.dq + h * k3v, k4v = f(s.q + h * k3q, k4q);
  HybridState n = s;
  n.q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
  n.dq += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  n.t_phase += h;
  return n;
}

/// Joint velocity jump that changes the COM horizontal velocity by dv through
/// an impulse at the hip.
inline Vec5 com_impulse_response(const RobotModel& model, const BodyChains& chains,
                                 const HybridState& s, double dv) {
  const auto t = dynamics_terms_t<double>(model, chains, s.q, s.dq);
  const LinkTrig<double> trig(s.q, s.dq);
  const auto hip = eval_point<double>(chains.hip, trig);
  const auto com = com_kinematics_t<double>(chains, trig);
  const Vec5 unit = t.D.ldlt().solve(hip.J.row(0).transpose());
  const double gain = com.J.row(0).dot(unit);
  if (!(std::abs(gain) > 1e-12)) throw IntegrationFault("com impulse: hip impulse has no effect on the COM");
  return unit * (dv / gain);
}

/// Zero-torque controller for passive runs.
struct PassiveController {
  HybridState initial;
  HybridState start(double) { return initial; }
  void touchdown(double) {}
  Vec4 tick(const HybridState&, double, TickTelemetry* tel = nullptr) {
    if (tel) *tel = {};
    return Vec4::Zero();
  }
  long ik_failures() const { return 0; }
};

/// Fixed-step RK4 with the controller held over each tick, guard location by
/// bisection, impact reset and fall detection.
template <class Controller>
SimLog simulate(const RobotModel& model, Controller& controller, const SimConfig& cfg,
                double nominal_height) {
  cfg.validate();
  const BodyChains chains(model);
  SimLog log;
  double t = 0.0;
  HybridState s = controller.start(t);
  s.t_phase = 0.0;
  Eigen::Vector2d stance(0.0, cfg.terrain.height(0.0));
  std::vector<bool> applied(cfg.disturbances.size(), false);
  StepRecord step;
  step.t_start = 0.0;
  double step_com_start = stance(0) + com_state(model, s).pos(0);
  double vsum = 0.0, vsq = 0.0;
  int vcount = 0;
  double t_ssp = 0.25;
  if constexpr (requires { controller.gait(); }) t_ssp = controller.gait().t_ssp;

  const auto finish = [&](Termination why, std::string diag = {}) {
    if (why == Termination::Fall || why == Termination::Stalled || why == Termination::Fault) {
      step.index = static_cast<long>(log.steps.size());
      step.duration = t - step.t_start;
      step.stance_x = stance(0);
      step.survived = false;
      log.steps.push_back(step);
    }
    log.termination = why;
    log.diagnostic = std::move(diag);
    log.end_time = t;
    log.ik_failures = controller.ik_failures();
  };

  for (;;) {
    if (t >= cfg.max_time) {
      finish(Termination::TimeLimit);
      return log;
    }
    for (std::size_t i = 0; i < cfg.disturbances.size(); ++i) {
      const auto& d = cfg.disturbances[i];
      if (!applied[i] && d.is_impulse() && t >= d.time) {
        s.dq += com_impulse_response(model, chains, s, d.delta_v);
        applied[i] = true;
      }
    }
    double force = 0.0;
    for (const auto& d : cfg.disturbances) {
      if (!d.is_impulse() && t >= d.time && t < d.time + d.duration) force += d.force;
    }

    TickTelemetry tel;
    Vec4 u;
    try {
      u = controller.tick(s, t, &tel);
    } catch (const Error& e) {
      finish(Termination::Fault, e.what());
      return log;
    }
    const PointState com = com_state(model, s);
    if constexpr (requires { controller.gait(); }) {
      log.max_step_command = std::max(log.max_step_command, std::abs(tel.l.filtered));
      if (std::abs(tel.l.filtered) > controller.config().regulator.l_max) {
        finish(Termination::Fault, "step command exceeds l_max");
        return log;
      }
    }
    if (cfg.record_ticks) log.ticks.push_back({tel, s, stance(0), stance(1)});
    vsum += com.vel(0);
    vsq += com.vel(0) * com.vel(0);
    ++vcount;

    const double pitch = s.q(0) - s.q(1) - s.q(2);
    if (std::abs(pitch) > cfg.fall_pitch || com.pos(1) < cfg.fall_height_ratio * nominal_height) {
      finish(Termination::Fall, std::abs(pitch) > cfg.fall_pitch ? "torso pitch limit" : "COM height limit");
      return log;
    }
    if (s.t_phase > cfg.step_timeout * t_ssp) {
      finish(Termination::Stalled, "no touchdown within the step timeout");
      return log;
    }

    const int substeps = static_cast<int>(std::round(cfg.control_period / cfg.dt));
    bool crossed = false;
    for (int sub = 0; sub < substeps; ++sub) {
      HybridState next = rk4_step(model, chains, s, u, force, cfg.dt);
      if (!next.finite()) {
        finish(Termination::Fault, "non-finite state");
        return log;
      }
      const bool armed = next.t_phase >= cfg.guard_enable_phase * t_ssp;
      const double g0 = guard(model, s, stance, cfg.terrain);
      const double g1 = guard(model, next, stance, cfg.terrain);
      if (armed && touchdown_crossing(g0, g1, guard_rate(model, next, stance, cfg.terrain))) {
        crossed = true;
        break;
      }
      s = next;
      t += cfg.dt;
    }
    if (!crossed) continue;

    // Locate the crossing: g(lo) > 0 >= g(hi).
    double lo = 0.0, hi = cfg.dt;
    HybridState pre = rk4_step(model, chains, s, u, force, hi);
    while (hi - lo > cfg.event_tolerance) {
      const double mid = 0.5 * (lo + hi);
      const HybridState m = rk4_step(model, chains, s, u, force, mid);
      if (guard(model, m, stance, cfg.terrain) > 0.0) {
        lo = mid;
      } else {
        hi = mid;
        pre = m;
      }
    }
    t += hi;
    const PointState com_pre = com_state(model, pre);
    const PointState sw = swing_foot_pose(model, pre);
    const ImpactResult imp = impact_reset(model, pre);

    step.index = static_cast<long>(log.steps.size());
    step.duration = t - step.t_start;
    step.preimpact = {com_pre.pos(0), com_pre.vel(0)};
    step.step_length = sw.pos(0);
    step.l_command = tel.l.filtered;
    step.v_cmd = tel.v_cmd;
    step.mean_velocity = (stance(0) + com_pre.pos(0) - step_com_start) / step.duration;
    const double mean = vsum / vcount;
    step.velocity_std = std::sqrt(std::max(vsq / vcount - mean * mean, 0.0));
    step.stance_x = stance(0);
    step.impact_valid = imp.valid;
    log.steps.push_back(step);

    stance += sw.pos;
    s = imp.post;
    step = StepRecord{};
    step.t_start = t;
    step_com_start = stance(0) + com_state(model, s).pos(0);
    vsum = vsq = 0.0;
    vcount = 0;
    controller.touchdown(t);
    if (static_cast<int>(log.steps.size()) >= cfg.max_steps) {
      finish(Termination::StepLimit);
      return log;
    }
  }
}

/// Closed-loop walking run with the library controller.
inline SimLog simulate_walking(const RobotModel& model, const GaitLibrary& library,
                               const ControllerConfig& ctrl, const SimConfig& cfg) {
  WalkingController c(model, library, ctrl, cfg.speed);
  const double h = interpolate_gait(library, cfg.speed(0.0)).com_height;
  return simulate(model, c, cfg, h);
}

/// Default controller: deadbeat HLIP gain for the library's COM height and
/// step period.
inline ControllerConfig default_controller(const GaitLibrary& library) {
  ControllerConfig c;
  const HlipParams p(library.gaits.front().com_height, library.t_ssp);
  c.regulator = RegulatorConfig::deadbeat(p);
  return c;
}

// ---------------------------------------------------------------------------
// Experiment summaries

struct PreimpactStats {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d variance = Eigen::Vector2d::Zero();
  int samples = 0;
};

inline PreimpactStats preimpact_stats(const SimLog& log, int transient) {
  PreimpactStats st;
  for (std::size_t k = transient; k < log.steps.size(); ++k) {
    st.mean += log.steps[k].preimpact.vec();
    ++st.samples;
  }
  if (st.samples == 0) return st;
  st.mean /= st.samples;
  for (std::size_t k = transient; k < log.steps.size(); ++k) {
    st.variance += (log.steps[k].preimpact.vec() - st.mean).cwiseAbs2();
  }
  st.variance /= st.samples;
  return st;
}

/// Steps after `t_push` until the pre-impact error to `z_ref` stays below the
/// thresholds for the rest of the run; -1 if it never settles.
inline int steps_to_recover(const SimLog& log, double t_push, const HlipState& z_ref,
                            double tol_p = 0.01, double tol_v = 0.03) {
  int first = -1, count = 0;
  for (const auto& s : log.steps) {
    if (s.t_start + s.duration <= t_push) continue;
    ++count;
    const bool ok = std::abs(s.preimpact.p - z_ref.p) < tol_p && std::abs(s.preimpact.v - z_ref.v) < tol_v;
    if (ok && first < 0) first = count;
    if (!ok) first = -1;
  }
  if (first < 0) return -1;
  // Zero when the first step after the push already meets the threshold.
  return first - 1;
}

/// Largest per-step tracking error |mean velocity - v_ref| over the steps that
/// start at least `transient` steps after the latest reference change.
struct TrackingSummary {
  double max_error = 0.0;
  int steps_checked = 0;
};

inline TrackingSummary velocity_tracking(const SimLog& log, const SpeedSchedule& sched, int transient) {
  TrackingSummary sum;
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const auto& s = log.steps[k];
    int since = 0;
    for (std::size_t j = k; j-- > 0;) {
      if (sched(log.steps[j].t_start) != sched(s.t_start)) break;
      ++since;
    }
    if (since < transient || sched(s.t_start) != sched(s.t_start + s.duration)) continue;
    sum.max_error = std::max(sum.max_error, std::abs(s.mean_velocity - sched(s.t_start)));
    ++sum.steps_checked;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Reduced-order experiments

/// HLIP closed loop z+ = A z + B l + w with l from the step controller and a
/// disturbance w added after step `push_step`. Returns the number of steps
/// until the orbit error is below `tol`, or -1.
inline int rom_push_recovery(const HlipParams& params, const OrbitSpec& orbit, const FeedbackGain& gain,
                             const Eigen::Vector2d& w, int push_step = 0, int max_steps = 20,
                             double tol = 1e-9) {
  const S2SDynamics dyn = s2s_matrices(params);
  Eigen::Vector2d z = orbit.z(0).vec();
  for (long k = 0; k < max_steps; ++k) {
    const double l = step_controller(HlipState::from(z), orbit, gain, k);
    z = dyn.step(z, l);
    if (k == push_step) z += w;
    if (k >= push_step) {
      const double err = (z - orbit.z(k + 1).vec()).cwiseAbs().maxCoeff();
      if (err < tol) return static_cast<int>(k - push_step);
    }
  }
  return -1;
}

// ---------------------------------------------------------------------------
// CSV output

inline const char* kTickHeader =
    "time,tau,step,stance_x,stance_z,com_x,com_z,com_vx,com_vz,zpred_p,zpred_v,l_raw,l_filtered,"
    "l_saturated,err_com_z,err_torso,err_swf_x,err_swf_z,derr_com_z,derr_torso,derr_swf_x,"
    "derr_swf_z,u_stance_knee,u_stance_hip,u_swing_hip,u_swing_knee,v_cmd,ik_failed,torque_clamped";

inline const char* kStepHeader =
    "step,t_start,duration,pre_p,pre_v,step_length,l_command,v_cmd,mean_velocity,velocity_std,"
    "stance_x,impact_valid,survived";

inline void write_ticks_csv(std::ostream& os, const SimLog& log) {
  using io::fmt;
  os << kTickHeader << '\n';
  for (const auto& r : log.ticks) {
    const auto& e = r.tel;
    os << fmt(e.time) << ',' << fmt(e.tau) << ',' << e.step << ',' << fmt(r.stance_x) << ','
       << fmt(r.stance_z) << ',' << fmt(e.com.pos(0)) << ',' << fmt(e.com.pos(1)) << ','
       << fmt(e.com.vel(0)) << ',' << fmt(e.com.vel(1)) << ',' << fmt(e.z_pred.p) << ','
       << fmt(e.z_pred.v) << ',' << fmt(e.l.raw) << ',' << fmt(e.l.filtered) << ','
       << int(e.l.saturated);
    for (int i = 0; i < 4; ++i) os << ',' << fmt(e.y_err(i));
    for (int i = 0; i < 4; ++i) os << ',' << fmt(e.dy_err(i));
    for (int i = 0; i < 4; ++i) os << ',' << fmt(e.u(i));
    os << ',' << fmt(e.v_cmd) << ',' << int(e.ik_failed) << ',' << int(e.torque_clamped) << '\n';
  }
}

inline void write_steps_csv(std::ostream& os, const SimLog& log) {
  using io::fmt;
  os << kStepHeader << '\n';
  for (const auto& s : log.steps) {
    os << s.index << ',' << fmt(s.t_start) << ',' << fmt(s.duration) << ',' << fmt(s.preimpact.p)
       << ',' << fmt(s.preimpact.v) << ',' << fmt(s.step_length) << ',' << fmt(s.l_command) << ','
       << fmt(s.v_cmd) << ',' << fmt(s.mean_velocity) << ',' << fmt(s.velocity_std) << ','
       << fmt(s.stance_x) << ',' << int(s.impact_valid) << ',' << int(s.survived) << '\n';
  }
}

/// COM (x relative to stance, vx) at each collocation node of a gait.
inline std::vector<std::pair<double, HlipState>> orbit_curve(const RobotModel& model, const Gait& g) {
  std::vector<std::pair<double, HlipState>> c;
  for (int k = 0; k < g.nodes(); ++k) {
    const PointState com = com_state(model, g.node_state(k));
    c.emplace_back(static_cast<double>(k) / (g.nodes() - 1), HlipState{com.pos(0), com.vel(0)});
  }
  return c;
}

/// Phase portrait: every tick's (COM x relative to stance, COM vx), tagged
/// "sim", then the nominal orbit nodes of `gait`, tagged "orbit".
inline void write_phase_portrait_csv(std::ostream& os, const SimLog& log, const RobotModel& model,
                                     const Gait* gait) {
  using io::fmt;
  os << "source,step,tau,com_x,com_vx\n";
  for (const auto& r : log.ticks) {
    os << "sim," << r.tel.step << ',' << fmt(r.tel.tau) << ',' << fmt(r.tel.com.pos(0)) << ','
       << fmt(r.tel.com.vel(0)) << '\n';
  }
  if (!gait) return;
  for (const auto& [tau, c] : orbit_curve(model, *gait)) {
    os << "orbit,-1," << fmt(tau) << ',' << fmt(c.p) << ',' << fmt(c.v) << '\n';
  }
}

}  // namespace hzdhlip
