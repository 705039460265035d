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

// Hybrid linear inverted pendulum (HLIP): closed-form continuous flow,
// pre-impact step-to-step map, periodic orbits and step-length feedback.
//
// Conventions used throughout:
//  * p, v are the horizontal COM position/velocity relative to the stance foot.
//  * A step of length l is the new stance foot position minus the old one,
//    expressed in the old stance frame. At touchdown p jumps by -l.
//  * One step = touchdown, double support (constant velocity, T_dssp), then
//    single support (hyperbolic flow, T_ssp), ending at the next pre-impact.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>

#include <Eigen/Dense>

#include "hzdhlip/errors.hpp"

namespace hzdhlip {

class HlipParams {
 public:
  HlipParams(double d0, double t_ssp, double t_dssp = 0.0, double g = 9.81)
      : d0_(d0), g_(g), t_ssp_(t_ssp), t_dssp_(t_dssp) {
    if (!(d0 > 0.0) || !(g > 0.0) || !(t_ssp > 0.0) || !(t_dssp >= 0.0) ||
        !std::isfinite(d0) || !std::isfinite(g) || !std::isfinite(t_ssp) ||
        !std::isfinite(t_dssp)) {
      throw InvalidArgument("HlipParams: require d0 > 0, g > 0, T_ssp > 0, T_dssp >= 0");
    }
    lambda_ = std::sqrt(g_ / d0_);
  }

  double d0() const { return d0_; }
  double g() const { return g_; }
  double t_ssp() const { return t_ssp_; }
  double t_dssp() const { return t_dssp_; }
  double lambda() const { return lambda_; }
  /// Duration of one full step.
  double step_period() const { return t_ssp_ + t_dssp_; }

 private:
  double d0_;
  double g_;
  double t_ssp_;
  double t_dssp_;
  double lambda_;
};

struct HlipState {
  double p = 0.0;
  double v = 0.0;

  Eigen::Vector2d vec() const { return {p, v}; }
  static HlipState from(const Eigen::Vector2d& z) { return {z(0), z(1)}; }
  bool finite() const { return std::isfinite(p) && std::isfinite(v); }
};

struct S2SDynamics {
  Eigen::Matrix2d A;
  Eigen::Vector2d B;

  Eigen::Vector2d step(const Eigen::Vector2d& z, double l) const { return A * z + B * l; }
};

enum class OrbitKind { Period1, Period2 };

/// Periodic HLIP orbit. Period1 uses only phase 0. For Period2, phase 0 is the
/// pre-impact state before the step l[0] (the step that lands the left foot)
/// and phase 1 the one before l[1]:
///   z[1] = A z[0] + B l[0],   z[0] = A z[1] + B l[1].
struct OrbitSpec {
  OrbitKind kind = OrbitKind::Period1;
  double v_des = 0.0;
  double step_width = 0.0;
  std::array<HlipState, 2> z_star{};
  std::array<double, 2> l_star{};

  std::size_t phase(long step_index) const {
    if (kind == OrbitKind::Period1) return 0;
    return static_cast<std::size_t>(((step_index % 2) + 2) % 2);
  }
  const HlipState& z(long step_index) const { return z_star[phase(step_index)]; }
  double l(long step_index) const { return l_star[phase(step_index)]; }
};

struct FeedbackGain {
  Eigen::RowVector2d K = Eigen::RowVector2d::Zero();
};

/// State transition matrix of p'' = lambda^2 p over dt.
inline Eigen::Matrix2d lip_flow_matrix(const HlipParams& params, double dt) {
  const double lam = params.lambda();
  const double c = std::cosh(lam * dt);
  const double s = std::sinh(lam * dt);
  Eigen::Matrix2d E;
  E << c, s / lam, lam * s, c;
  return E;
}

inline HlipState lip_flow(const HlipState& state, const HlipParams& params, double dt) {
  if (!(dt >= 0.0)) throw InvalidArgument("lip_flow: dt must be non-negative");
  return HlipState::from(lip_flow_matrix(params, dt) * state.vec());
}

inline S2SDynamics s2s_matrices(const HlipParams& params) {
  const Eigen::Matrix2d E = lip_flow_matrix(params, params.t_ssp());
  Eigen::Matrix2d dsp;
  dsp << 1.0, params.t_dssp(), 0.0, 1.0;
  return {E * dsp, -E.col(0)};
}

namespace detail {

inline constexpr double kOrbitResidualTol = 1e-9;

inline double cycle_residual(const S2SDynamics& dyn, const OrbitSpec& orbit) {
  if (orbit.kind == OrbitKind::Period1) {
    return (dyn.step(orbit.z_star[0].vec(), orbit.l_star[0]) - orbit.z_star[0].vec())
        .cwiseAbs()
        .maxCoeff();
  }
  const double r0 =
      (dyn.step(orbit.z_star[0].vec(), orbit.l_star[0]) - orbit.z_star[1].vec()).cwiseAbs().maxCoeff();
  const double r1 =
      (dyn.step(orbit.z_star[1].vec(), orbit.l_star[1]) - orbit.z_star[0].vec()).cwiseAbs().maxCoeff();
  return std::max(r0, r1);
}

}  // namespace detail

/// Residual of the orbit's cycle equations (max-abs).
inline double orbit_residual(const HlipParams& params, const OrbitSpec& orbit) {
  return detail::cycle_residual(s2s_matrices(params), orbit);
}

inline OrbitSpec period1_orbit(double v_des, const HlipParams& params) {
  const S2SDynamics dyn = s2s_matrices(params);
  const double l = v_des * params.step_period();
  const Eigen::Matrix2d IA = Eigen::Matrix2d::Identity() - dyn.A;
  const Eigen::FullPivLU<Eigen::Matrix2d> lu(IA);
  if (!lu.isInvertible() || std::abs(IA.determinant()) < 1e-14) {
    throw NonCharacterizableOrbit("period1_orbit: I - A is singular");
  }
  OrbitSpec orbit;
  orbit.kind = OrbitKind::Period1;
  orbit.v_des = v_des;
  orbit.l_star = {l, l};
  orbit.z_star[0] = HlipState::from(lu.solve(dyn.B * l));
  orbit.z_star[1] = orbit.z_star[0];
  if (!(detail::cycle_residual(dyn, orbit) < detail::kOrbitResidualTol)) {
    throw NonCharacterizableOrbit("period1_orbit: fixed point residual too large");
  }
  return orbit;
}

/// Lateral 2-cycle. The two step lengths are v_des*T +/- step_width so the
/// stance feet are step_width apart and the average drift is v_des.
inline OrbitSpec period2_orbit(double v_des, double step_width, const HlipParams& params) {
  if (!(step_width > 0.0)) throw InvalidArgument("period2_orbit: step_width must be positive");
  const S2SDynamics dyn = s2s_matrices(params);
  const double drift = v_des * params.step_period();
  const double l_left = drift + step_width;
  const double l_right = drift - step_width;

  Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
  M.block<2, 2>(0, 2) = -dyn.A;
  M.block<2, 2>(2, 0) = -dyn.A;
  Eigen::Vector4d rhs;
  rhs << dyn.B * l_right, dyn.B * l_left;
  const Eigen::FullPivLU<Eigen::Matrix4d> lu(M);
  if (!lu.isInvertible()) throw NonCharacterizableOrbit("period2_orbit: I - A^2 is singular");
  const Eigen::Vector4d z = lu.solve(rhs);

  OrbitSpec orbit;
  orbit.kind = OrbitKind::Period2;
  orbit.v_des = v_des;
  orbit.step_width = step_width;
  orbit.z_star = {HlipState{z(0), z(1)}, HlipState{z(2), z(3)}};
  orbit.l_star = {l_left, l_right};
  if (!(detail::cycle_residual(dyn, orbit) < detail::kOrbitResidualTol)) {
    throw NonCharacterizableOrbit("period2_orbit: 2-cycle residual too large");
  }
  return orbit;
}

/// Eigenvalues of A + B K.
inline std::array<std::complex<double>, 2> closed_loop_eigenvalues(const S2SDynamics& dyn,
                                                                   const FeedbackGain& gain) {
  const Eigen::Matrix2d M = dyn.A + dyn.B * gain.K;
  const std::complex<double> tr = M.trace();
  const std::complex<double> disc = std::sqrt(tr * tr - 4.0 * M.determinant());
  return {(tr + disc) / 2.0, (tr - disc) / 2.0};
}

inline double spectral_radius(const S2SDynamics& dyn, const FeedbackGain& gain) {
  const auto ev = closed_loop_eigenvalues(dyn, gain);
  return std::max(std::abs(ev[0]), std::abs(ev[1]));
}

/// Places the closed-loop poles of A + B K at the roots of
/// s^2 - (pole1 + pole2) s + pole1 pole2.
///
/// For 2x2 matrices det(A + B K) = det A + K adj(A) B, so trace and
/// determinant give two linear equations in K. A poorly conditioned system
/// falls back to the minimum-norm least-squares solution, which is accepted
/// only if it still realizes the requested characteristic polynomial.
inline FeedbackGain place_gain(const S2SDynamics& dyn, double pole1, double pole2) {
  if (!(std::abs(pole1) < 1.0) || !(std::abs(pole2) < 1.0)) {
    throw NoStabilizingGain("place_gain: requested poles must lie inside the unit circle");
  }
  const Eigen::Matrix2d adjA = dyn.A.trace() * Eigen::Matrix2d::Identity() - dyn.A;
  Eigen::Matrix2d M;
  M.row(0) = dyn.B.transpose();
  M.row(1) = (adjA * dyn.B).transpose();
  const Eigen::Vector2d rhs(pole1 + pole2 - dyn.A.trace(), pole1 * pole2 - dyn.A.determinant());

  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  Eigen::Vector2d k;
  if (sv(1) > 0.0 && sv(0) / sv(1) <= 1e12) {
    k = M.partialPivLu().solve(rhs);
  } else {
    k = svd.solve(rhs);
  }
  FeedbackGain gain;
  gain.K = k.transpose();

  const Eigen::Matrix2d cl = dyn.A + dyn.B * gain.K;
  const double scale = 1.0 + dyn.A.cwiseAbs().maxCoeff();
  if (!gain.K.allFinite() || std::abs(cl.trace() - (pole1 + pole2)) > 1e-9 * scale ||
      std::abs(cl.determinant() - pole1 * pole2) > 1e-9 * scale * scale) {
    throw NoStabilizingGain("place_gain: (A, B) is not controllable");
  }
  return gain;
}

/// Gain with (A + B K)^2 = 0: any error vanishes after two steps.
inline FeedbackGain deadbeat_gain(const S2SDynamics& dyn) { return place_gain(dyn, 0.0, 0.0); }

/// l = l_H + K (z_robot - z_H), with (z_H, l_H) taken from the orbit phase.
inline double step_controller(const HlipState& z_robot, const OrbitSpec& orbit,
                              const FeedbackGain& gain, long step_index) {
  const HlipState& zh = orbit.z(step_index);
  return orbit.l(step_index) + gain.K(0) * (z_robot.p - zh.p) + gain.K(1) * (z_robot.v - zh.v);
}

}  // namespace hzdhlip
