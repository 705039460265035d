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

// Online walking control: gait-library interpolation, HLIP step-length
// regulation, swing foot blending and inverse-kinematics PD tracking.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hzdhlip/bezier.hpp"
#include "hzdhlip/dynamics.hpp"
#include "hzdhlip/errors.hpp"
#include "hzdhlip/gait.hpp"
#include "hzdhlip/hlip.hpp"
#include "hzdhlip/ik.hpp"
#include "hzdhlip/log.hpp"

namespace hzdhlip {

// ---------------------------------------------------------------------------
// Gait interpolation

struct InterpolatedGait {
  double v_cmd = 0.0;   // speed after clamping to the library range
  double t_ssp = 0.25;
  double com_height = 0.5;
  OutputSet outputs;
  HlipState z_hlip;
  double l_nominal = 0.0;
  HybridState initial_state;  // convex combination of the node-0 states
  std::size_t lower = 0, upper = 0;
  double weight = 0.0;  // share of the upper gait
  bool clamped = false;
};

/// Convex combination of the two library gaits bracketing v_cmd.
inline InterpolatedGait interpolate_gait(const GaitLibrary& library, double v_cmd) {
  if (library.empty()) throw InvalidArgument("interpolate_gait: empty library");
  if (!std::isfinite(v_cmd)) throw InvalidArgument("interpolate_gait: non-finite speed");
  const auto& g = library.gaits;
  InterpolatedGait out;
  const double lo_v = g.front().v_des, hi_v = g.back().v_des;
  if (v_cmd < lo_v || v_cmd > hi_v) {
    out.clamped = true;
    log::warn_limited("interp-clamp", "interpolate_gait: speed " + std::to_string(v_cmd) +
                                          " outside the library range; clamped");
  }
  const double v = std::clamp(v_cmd, lo_v, hi_v);
  std::size_t hi = 0;
  while (hi + 1 < g.size() && g[hi].v_des < v) ++hi;
  const std::size_t lo = hi > 0 && g[hi].v_des > v ? hi - 1 : hi;
  const double w = hi == lo ? 0.0 : (v - g[lo].v_des) / (g[hi].v_des - g[lo].v_des);
  const Gait& a = g[lo];
  const Gait& b = g[hi];
  out.v_cmd = v;
  out.lower = lo;
  out.upper = hi;
  out.weight = w;
  out.t_ssp = a.t_ssp;
  out.com_height = (1.0 - w) * a.com_height + w * b.com_height;
  out.outputs = OutputSet::from_alpha((1.0 - w) * a.outputs.alpha() + w * b.outputs.alpha());
  out.z_hlip = {(1.0 - w) * a.z_hlip.p + w * b.z_hlip.p, (1.0 - w) * a.z_hlip.v + w * b.z_hlip.v};
  out.l_nominal = (1.0 - w) * a.l_nominal + w * b.l_nominal;
  const HybridState sa = a.initial_state(), sb = b.initial_state();
  out.initial_state.q = (1.0 - w) * sa.q + w * sb.q;
  out.initial_state.dq = (1.0 - w) * sa.dq + w * sb.dq;
  return out;
}

// ---------------------------------------------------------------------------
// Step-length regulation

/// Closed-form LIP propagation of the COM over the remaining stance time.
inline HlipState predict_preimpact(const HlipState& com, double t_phase, const HlipParams& params) {
  if (!(t_phase >= 0.0)) throw InvalidArgument("predict_preimpact: negative phase time");
  return lip_flow(com, params, std::max(params.t_ssp() - t_phase, 0.0));
}

/// Reference for the prediction error: the orbit's pre-impact state, or the
/// same LIP prediction applied to the nominal gait at the current phase.
enum class AnchorMode { Orbit, PhaseMatched };

struct RegulatorConfig {
  FeedbackGain gain;
  AnchorMode anchor = AnchorMode::PhaseMatched;
  double a_lpf = 0.118;  // about 20 Hz at 1 kHz ticks
  double l_max = 0.4;
  bool enabled = true;  // false: always command the nominal step length

  void validate() const {
    if (!(a_lpf > 0.0 && a_lpf <= 1.0)) throw InvalidArgument("RegulatorConfig: a_lpf must be in (0, 1]");
    if (!(l_max > 0.0)) throw InvalidArgument("RegulatorConfig: l_max must be positive");
    if (!gain.K.allFinite()) throw InvalidArgument("RegulatorConfig: non-finite gain");
  }

  /// Deadbeat gain of the HLIP with the given parameters.
  static RegulatorConfig deadbeat(const HlipParams& params) {
    RegulatorConfig c;
    c.gain = deadbeat_gain(s2s_matrices(params));
    return c;
  }
};

struct PlaneCommand {
  double raw = 0.0;
  double filtered = 0.0;
  bool saturated = false;
};

struct StepCommand {
  PlaneCommand x;
  PlaneCommand y;  // frontal plane, reduced-order model only
};

/// Raw step from the step controller, one filter update of `filter_state`,
/// then the reach clamp. Saturation is flagged, not fatal.
inline PlaneCommand regulate_step(const HlipState& z_pred, const OrbitSpec& orbit,
                                  const RegulatorConfig& config, long step_index,
                                  double& filter_state) {
  PlaneCommand c;
  c.raw = config.enabled ? step_controller(z_pred, orbit, config.gain, step_index) : orbit.l(step_index);
  filter_state = config.a_lpf * c.raw + (1.0 - config.a_lpf) * filter_state;
  c.saturated = std::abs(filter_state) > config.l_max;
  c.filtered = std::clamp(filter_state, -config.l_max, config.l_max);
  if (!(std::abs(c.filtered) <= config.l_max)) throw IntegrationFault("regulate_step: non-finite step length");
  return c;
}

/// Filter memory for one plane; the first update seeds the filter.
class StepRegulator {
 public:
  StepRegulator() = default;
  explicit StepRegulator(RegulatorConfig config) : config_(std::move(config)) { config_.validate(); }

  void reset(double l) { state_ = l; }
  const RegulatorConfig& config() const { return config_; }

  PlaneCommand update(const HlipState& z_pred, const OrbitSpec& orbit, long step_index) {
    if (!state_) state_ = orbit.l(step_index);
    return regulate_step(z_pred, orbit, config_, step_index, *state_);
  }

 private:
  RegulatorConfig config_;
  std::optional<double> state_;
};

/// Period-1 orbit whose anchors are the gait's own pre-impact COM state and
/// step length.
inline OrbitSpec gait_orbit(const InterpolatedGait& g) {
  OrbitSpec o;
  o.kind = OrbitKind::Period1;
  o.v_des = g.v_cmd;
  o.z_star = {g.z_hlip, g.z_hlip};
  o.l_star = {g.l_nominal, g.l_nominal};
  return o;
}

/// LIP pre-impact predictions from the nominal COM at each collocation node.
/// The last entry is the gait's pre-impact COM state itself.
inline std::vector<HlipState> anchor_profile(const RobotModel& model, const Gait& g) {
  const HlipParams params(g.com_height, g.t_ssp, 0.0, model.gravity);
  std::vector<HlipState> a;
  for (int k = 0; k < g.nodes(); ++k) {
    const HybridState s = g.node_state(k);
    const PointState com = com_state(model, s);
    a.push_back(predict_preimpact({com.pos(0), com.vel(0)}, s.t_phase, params));
  }
  return a;
}

/// Piecewise-linear lookup of an anchor profile at phase tau.
inline HlipState anchor_at(const std::vector<HlipState>& profile, double tau) {
  const int n = static_cast<int>(profile.size());
  const double x = std::clamp(tau, 0.0, 1.0) * (n - 1);
  const int k = std::min(static_cast<int>(x), n - 2);
  const double w = x - k;
  return {(1.0 - w) * profile[k].p + w * profile[k + 1].p, (1.0 - w) * profile[k].v + w * profile[k + 1].v};
}

// ---------------------------------------------------------------------------
// Swing foot blending

struct BlendedRef {
  double value = 0.0;
  double d_tau = 0.0;  // partial derivative in tau at fixed p_curr
  double d_p = 0.0;    // partial derivative in p_curr
};

/// Sagittal swing foot normalization with a linear ramp for in-place gaits.
struct SwingXShape {
  NormalizedCurve normalized;
  double start = 0.0;  // b(0)

  static SwingXShape from(const BezierCurve& nominal) {
    SwingXShape s;
    s.start = nominal.coeffs()(0);
    try {
      s.normalized = normalize_swf_x(nominal);
    } catch (const DegenerateCurve&) {
      s.normalized = identity_ramp(nominal.degree());
    }
    return s;
  }
};

/// (1 - tau) p + tau ([1 - nb(tau)] b(0) + nb(tau) l_x).
inline BlendedRef blend_swf_x(double p_curr, double l_x, const SwingXShape& shape, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("blend_swf_x: tau must be in [0, 1]");
  const double nb = shape.normalized.eval(tau), dnb = shape.normalized.d1(tau);
  const double G = (1.0 - nb) * shape.start + nb * l_x;
  const double dG = dnb * (l_x - shape.start);
  BlendedRef r;
  r.value = (1.0 - tau) * p_curr + tau * G;
  r.d_tau = -p_curr + G + tau * dG;
  r.d_p = 1.0 - tau;
  if (tau == 1.0) r.value = l_x;
  return r;
}

/// (1 - tau) p + tau nb(tau) l_y.
inline BlendedRef blend_swf_y(double p_curr, double l_y, const NormalizedCurve& shape, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("blend_swf_y: tau must be in [0, 1]");
  const double nb = shape.eval(tau);
  BlendedRef r;
  r.value = (1.0 - tau) * p_curr + tau * nb * l_y;
  r.d_tau = -p_curr + nb * l_y + tau * shape.d1(tau) * l_y;
  r.d_p = 1.0 - tau;
  if (tau == 0.0) r.value = p_curr;
  return r;
}

// ---------------------------------------------------------------------------
// Inverse-kinematics PD tracking

struct TrackerGains {
  Vec4 kp = Vec4::Constant(400.0);
  Vec4 kd = Vec4::Constant(30.0);
  IkOptions ik;

  void validate() const {
    if (!((kp.array() > 0.0).all() && (kd.array() > 0.0).all())) {
      throw InvalidArgument("TrackerGains: Kp and Kd must be positive");
    }
  }
};

struct OutputReference {
  Vec4 y = Vec4::Zero();
  Vec4 dy = Vec4::Zero();
  Vec4 ddy = Vec4::Zero();
};

struct TrackResult {
  Vec4 u = Vec4::Zero();
  Vec5 q_target = Vec5::Zero();
  Vec5 dq_target = Vec5::Zero();
  bool ik_failed = false;
  bool clamped = false;
};

/// Joint position and velocity targets for the output references with the
/// stance shank angle held at its measured value.
inline TrackResult joint_targets(const BodyChains& chains, const HybridState& state,
                                 const OutputReference& ref, const IkOptions& ik,
                                 const Vec5* q_seed = nullptr) {
  static const Eigen::Matrix<bool, 5, 1> rows = (Eigen::Matrix<bool, 5, 1>() << false, true, true, true, true).finished();
  TrackResult r;
  Vec5 target;
  target << 0.0, ref.y;
  Vec5 start = q_seed ? *q_seed : state.q;
  start(0) = state.q(0);
  const IkResult sol = solve_ik(chains, start, target, rows, rows, ik);
  r.ik_failed = !sol.converged || !sol.q.allFinite();
  r.q_target = r.ik_failed ? start : sol.q;
  const TaskKinematics k = task_kinematics(chains, r.q_target);
  const Eigen::Matrix4d Ja = k.J.bottomRightCorner<4, 4>();
  const Vec4 rhs = ref.dy - k.J.bottomLeftCorner<4, 1>() * state.dq(0);
  r.dq_target(0) = state.dq(0);
  r.dq_target.tail<4>() = Ja.partialPivLu().solve(rhs);
  if (!r.dq_target.allFinite()) {
    r.ik_failed = true;
    r.dq_target = state.dq;
  }
  return r;
}

/// Joint-space PD toward the IK targets plus `feedforward`, clamped to the
/// model torque limits.
inline TrackResult track_outputs(const RobotModel& model, const BodyChains& chains,
                                 const HybridState& state, const OutputReference& ref,
                                 const TrackerGains& gains, const Vec4& feedforward = Vec4::Zero(),
                                 const Vec5* q_seed = nullptr) {
  if (!(ref.y.allFinite() && ref.dy.allFinite())) throw InvalidArgument("track_outputs: non-finite reference");
  TrackResult r = joint_targets(chains, state, ref, gains.ik, q_seed);
  const Vec4 e = r.q_target.tail<4>() - state.q.tail<4>();
  const Vec4 de = r.dq_target.tail<4>() - state.dq.tail<4>();
  const Vec4 u = feedforward + gains.kp.cwiseProduct(e) + gains.kd.cwiseProduct(de);
  r.u = clamp_torques(model, u, &r.clamped);
  return r;
}

/// Torques that realize output accelerations ddy at the current state:
/// (J D^-1 B) u = ddy - Jdot dq + J D^-1 H.
inline Vec4 output_feedforward(const RobotModel& model, const BodyChains& chains,
                               const HybridState& state, const Vec4& ddy) {
  const DynamicsTerms t = dynamics_terms(model, state.q, state.dq);
  const auto o = output_kinematics_t<double>(chains, state.q, state.dq);
  const Eigen::LDLT<Mat5> D(t.D);
  const Eigen::Matrix<double, 4, 4> A = o.J * D.solve(t.B_act);
  const Vec4 b = ddy - o.bias + o.J * D.solve(t.H);
  return A.partialPivLu().solve(b);
}

// ---------------------------------------------------------------------------
// Walking controller

struct ControllerConfig {
  RegulatorConfig regulator;
  TrackerGains tracker;
  bool feedforward = true;
  double late_descent_rate = 0.3;  // swing foot descent after tau = 1 [m/s]
};

struct TickTelemetry {
  double time = 0.0;
  double tau = 0.0;
  long step = 0;
  PointState com;
  HlipState z_pred;
  PlaneCommand l;
  Vec4 y_err = Vec4::Zero();   // actual minus reference
  Vec4 dy_err = Vec4::Zero();
  Vec4 u = Vec4::Zero();
  double v_cmd = 0.0;
  bool ik_failed = false;
  bool torque_clamped = false;
};

/// Per-tick control law. The interpolated gait is frozen for the duration of
/// a step and re-interpolated at each touchdown.
class WalkingController {
 public:
  using SpeedProfile = std::function<double(double)>;

  WalkingController(const RobotModel& model, const GaitLibrary& library, ControllerConfig config,
                    SpeedProfile v_ref)
      : model_(model),
        chains_(model),
        library_(library),
        config_(std::move(config)),
        v_ref_(std::move(v_ref)),
        regulator_(config_.regulator) {
    config_.tracker.validate();
    if (!v_ref_) throw InvalidArgument("WalkingController: missing speed profile");
  }

  /// Interpolates the gait for the start time and returns its nominal
  /// post-impact state.
  HybridState start(double t) {
    begin_step(t, 0);
    regulator_.reset(gait_.l_nominal);
    return gait_.initial_state;
  }

  /// Called after each touchdown.
  void touchdown(double t) { begin_step(t, step_ + 1); }

  Vec4 tick(const HybridState& state, double t, TickTelemetry* tel = nullptr) {
    const double T = gait_.t_ssp;
    const double raw_tau = state.t_phase / T;
    const double tau = std::clamp(raw_tau, 0.0, 1.0);
    const double rate = raw_tau <= 1.0 ? 1.0 / T : 0.0;
    const PointState com = com_state(model_, state);
    const HlipParams params(gait_.com_height, T);
    const HlipState z_pred = predict_preimpact({com.pos(0), com.vel(0)}, state.t_phase, params);
    if (config_.regulator.anchor == AnchorMode::PhaseMatched) {
      const HlipState za = anchor_at(anchor_lo_, tau), zb = anchor_at(anchor_hi_, tau);
      const double w = gait_.weight;
      orbit_.z_star[0] = orbit_.z_star[1] = {(1.0 - w) * za.p + w * zb.p, (1.0 - w) * za.v + w * zb.v};
    }
    const PlaneCommand l = regulator_.update(z_pred, orbit_, step_);

    OutputReference ref;
    ref.y = gait_.outputs.eval(tau);
    ref.dy = gait_.outputs.d1(tau) * rate;
    ref.ddy = gait_.outputs.d2(tau) * rate * rate;
    const auto out = output_kinematics_t<double>(chains_, state.q, state.dq);
    const BlendedRef bx = blend_swf_x(out.y(OutputSet::kSwingX), l.filtered, swing_x_, tau);
    ref.y(OutputSet::kSwingX) = bx.value;
    ref.dy(OutputSet::kSwingX) = bx.d_tau * rate + bx.d_p * out.dy(OutputSet::kSwingX);
    ref.ddy(OutputSet::kSwingX) =
        swing_x_.normalized.d2(tau) * (l.filtered - swing_x_.start) * rate * rate;
    if (raw_tau > 1.0) {
      // Late touchdown: keep descending.
      const double late = state.t_phase - T;
      const double vz = std::min(gait_.outputs.swf_z().d1(1.0) / T, -config_.late_descent_rate);
      ref.y(OutputSet::kSwingZ) += vz * late;
      ref.dy(OutputSet::kSwingZ) = vz;
    }

    const Vec4 ff = config_.feedforward ? output_feedforward(model_, chains_, state, ref.ddy) : Vec4::Zero();
    const TrackResult tr = track_outputs(model_, chains_, state, ref, config_.tracker,
                                         ff.allFinite() ? ff : Vec4::Zero(),
                                         last_target_ ? &*last_target_ : nullptr);
    if (tr.ik_failed) {
      ++ik_failures_;
    } else {
      last_target_ = tr.q_target;
    }
    if (tel) {
      tel->time = t;
      tel->tau = raw_tau;
      tel->step = step_;
      tel->com = com;
      tel->z_pred = z_pred;
      tel->l = l;
      tel->y_err = out.y - ref.y;
      tel->dy_err = out.dy - ref.dy;
      tel->u = tr.u;
      tel->v_cmd = gait_.v_cmd;
      tel->ik_failed = tr.ik_failed;
      tel->torque_clamped = tr.clamped;
    }
    return tr.u;
  }

  const InterpolatedGait& gait() const { return gait_; }
  const OrbitSpec& orbit() const { return orbit_; }
  long step() const { return step_; }
  long ik_failures() const { return ik_failures_; }
  const ControllerConfig& config() const { return config_; }
  const RobotModel& model() const { return model_; }

 private:
  void begin_step(double t, long step) {
    step_ = step;
    gait_ = interpolate_gait(library_, v_ref_(t));
    orbit_ = gait_orbit(gait_);
    swing_x_ = SwingXShape::from(gait_.outputs.swf_x());
    last_target_.reset();
    if (config_.regulator.anchor == AnchorMode::PhaseMatched) {
      const Gait& lo = library_.gaits[gait_.lower];
      const Gait& hi = library_.gaits[gait_.upper];
      if (lo.nodes() < 2 || hi.nodes() < 2) throw InvalidArgument("WalkingController: gait has no trajectory");
      anchor_lo_ = anchor_profile(model_, lo);
      anchor_hi_ = anchor_profile(model_, hi);
    }
  }

  RobotModel model_;
  BodyChains chains_;
  const GaitLibrary& library_;
  ControllerConfig config_;
  SpeedProfile v_ref_;
  StepRegulator regulator_;
  InterpolatedGait gait_;
  OrbitSpec orbit_;
  SwingXShape swing_x_;
  std::vector<HlipState> anchor_lo_, anchor_hi_;
  std::optional<Vec5> last_target_;
  long step_ = 0;
  long ik_failures_ = 0;
};

}  // namespace hzdhlip
