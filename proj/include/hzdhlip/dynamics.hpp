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

// Full-order planar biped with the stance foot pinned to the ground.
//
// Generalized coordinates (all angles in rad):
//   q(0)  absolute angle of the stance shank, the unactuated pivot
//   q(1)  stance knee     q(2)  stance hip
//   q(3)  swing hip       q(4)  swing knee
// Joint angles follow one convention on both legs:
//   hip  = thigh angle - torso angle,   knee = shank angle - thigh angle.
// Link angles are measured from the upward vertical, positive when the link
// leans toward +x. Leg links are oriented foot -> hip, so a leg link with
// angle th spans the direction e(th) = (sin th, cos th) from its lower end.
//
// Every point of interest is a constant linear combination of link unit
// vectors, p = sum_j c_j e(theta_j), which makes positions, Jacobians and the
// velocity-product acceleration term closed-form. All kinematics and
// dynamics are templated on the scalar so forward-mode AD can run through
// them.

#pragma once

#include <array>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "hzdhlip/errors.hpp"
#include "hzdhlip/log.hpp"
#include "hzdhlip/robot_model.hpp"
#include "hzdhlip/terrain.hpp"

namespace hzdhlip {

inline constexpr int kDof = 5;
inline constexpr int kActuated = 4;
inline constexpr int kOutputs = 4;

template <class S>
using Vec5T = Eigen::Matrix<S, 5, 1>;
template <class S>
using Mat5T = Eigen::Matrix<S, 5, 5>;
template <class S>
using Vec2T = Eigen::Matrix<S, 2, 1>;
using Vec5 = Vec5T<double>;
using Mat5 = Mat5T<double>;
using Vec4 = Eigen::Matrix<double, 4, 1>;

enum class Leg { Left, Right };

inline Leg other_leg(Leg leg) { return leg == Leg::Left ? Leg::Right : Leg::Left; }

struct HybridState {
  Vec5 q = Vec5::Zero();
  Vec5 dq = Vec5::Zero();
  Leg stance = Leg::Left;
  double t_phase = 0.0;

  bool finite() const { return q.allFinite() && dq.allFinite() && std::isfinite(t_phase); }
};

namespace link {
enum Index : int { kStanceShank = 0, kStanceThigh, kTorso, kSwingThigh, kSwingShank };
}

/// Link angles as a function of q: theta = T q.
inline const Mat5& angle_map() {
  static const Mat5 T = [] {
    Mat5 m;
    m << 1, 0, 0, 0, 0,   //
        1, -1, 0, 0, 0,   //
        1, -1, -1, 0, 0,  //
        1, -1, -1, 1, 0,  //
        1, -1, -1, 1, 1;
    return m;
  }();
  return T;
}

/// Coordinate change swapping stance and swing legs. It is an involution.
inline const Mat5& relabel_matrix() {
  static const Mat5 R = [] {
    Mat5 m;
    m << 1, -1, -1, 1, 1,  //
        0, 0, 0, 0, 1,     //
        0, 0, 0, 1, 0,     //
        0, 0, 1, 0, 0,     //
        0, 1, 0, 0, 0;
    return m;
  }();
  return R;
}

/// Maps torques (stance knee, stance hip, swing hip, swing knee) to
/// generalized forces; the pivot row is zero.
inline Eigen::Matrix<double, 5, 4> actuation_matrix() {
  Eigen::Matrix<double, 5, 4> B = Eigen::Matrix<double, 5, 4>::Zero();
  B.bottomRows<4>().setIdentity();
  return B;
}

inline Vec4 torque_limits(const RobotModel& m) {
  return {m.knee_torque_limit, m.hip_torque_limit, m.hip_torque_limit, m.knee_torque_limit};
}

/// p = sum_j c(j) e(theta_j).
struct PointChain {
  Eigen::Matrix<double, 1, 5> c = Eigen::Matrix<double, 1, 5>::Zero();
};

struct BodyChains {
  std::array<PointChain, 5> com;
  std::array<double, 5> mass{};
  std::array<double, 5> inertia{};
  double total_mass = 0.0;
  PointChain hip, stance_knee, swing_knee, swing_foot;

  explicit BodyChains(const RobotModel& m) {
    const double ls = m.left_shank.length, lt = m.left_thigh.length;
    const double cs = m.left_shank.com_offset, ct = m.left_thigh.com_offset;
    com[link::kStanceShank].c << ls - cs, 0, 0, 0, 0;
    com[link::kStanceThigh].c << ls, lt - ct, 0, 0, 0;
    com[link::kTorso].c << ls, lt, m.torso.com_offset, 0, 0;
    com[link::kSwingThigh].c << ls, lt, 0, -ct, 0;
    com[link::kSwingShank].c << ls, lt, 0, -lt, -cs;
    mass = {m.left_shank.mass, m.left_thigh.mass, m.torso.mass, m.left_thigh.mass,
            m.left_shank.mass};
    inertia = {m.left_shank.inertia, m.left_thigh.inertia, m.torso.inertia, m.left_thigh.inertia,
               m.left_shank.inertia};
    total_mass = m.total_mass();
    stance_knee.c << ls, 0, 0, 0, 0;
    hip.c << ls, lt, 0, 0, 0;
    swing_knee.c << ls, lt, 0, -lt, 0;
    swing_foot.c << ls, lt, 0, -lt, -ls;
  }
};

/// sin/cos and rates of the five link angles.
template <class S>
struct LinkTrig {
  Vec5T<S> sn, cs, w;

  LinkTrig(const Vec5T<S>& q, const Vec5T<S>& dq) {
    using std::cos;
    using std::sin;
    Vec5T<S> th;
    th(0) = q(0);
    th(1) = th(0) - q(1);
    th(2) = th(1) - q(2);
    th(3) = th(2) + q(3);
    th(4) = th(3) + q(4);
    w(0) = dq(0);
    w(1) = w(0) - dq(1);
    w(2) = w(1) - dq(2);
    w(3) = w(2) + dq(3);
    w(4) = w(3) + dq(4);
    for (int j = 0; j < 5; ++j) {
      sn(j) = sin(th(j));
      cs(j) = cos(th(j));
    }
  }
};

template <class S>
struct PointKinematics {
  Vec2T<S> pos;
  Vec2T<S> vel;
  Vec2T<S> bias;  // Jdot * dq
  Eigen::Matrix<S, 2, 5> J;
};

template <class S>
PointKinematics<S> eval_point(const PointChain& chain, const LinkTrig<S>& t) {
  const Mat5& T = angle_map();
  PointKinematics<S> k;
  k.pos.setZero();
  k.vel.setZero();
  k.bias.setZero();
  k.J.setZero();
  for (int j = 0; j < 5; ++j) {
    const double c = chain.c(j);
    if (c == 0.0) continue;
    const S ex = c * t.sn(j), ez = c * t.cs(j);
    k.pos(0) += ex;
    k.pos(1) += ez;
    // d e / d theta = (cos, -sin)
    k.vel(0) += c * t.cs(j) * t.w(j);
    k.vel(1) -= c * t.sn(j) * t.w(j);
    k.bias(0) -= ex * t.w(j) * t.w(j);
    k.bias(1) -= ez * t.w(j) * t.w(j);
    for (int i = 0; i < 5; ++i) {
      if (T(j, i) == 0.0) continue;
      k.J(0, i) += T(j, i) * c * t.cs(j);
      k.J(1, i) -= T(j, i) * c * t.sn(j);
    }
  }
  return k;
}

template <class S>
struct DynamicsTermsT {
  Mat5T<S> D;  // inertia matrix
  Vec5T<S> H;  // Coriolis, centrifugal and gravity
};

struct DynamicsTerms {
  Mat5 D;
  Vec5 H;
  Eigen::Matrix<double, 5, 4> B_act;
};

template <class S>
DynamicsTermsT<S> dynamics_terms_t(const RobotModel& model, const BodyChains& chains,
                                   const Vec5T<S>& q, const Vec5T<S>& dq) {
  const LinkTrig<S> t(q, dq);
  const Mat5& T = angle_map();
  DynamicsTermsT<S> out;
  out.D.setZero();
  out.H.setZero();
  for (int b = 0; b < 5; ++b) {
    const PointKinematics<S> k = eval_point(chains.com[b], t);
    const double m = chains.mass[b];
    Vec2T<S> acc = k.bias;
    acc(1) += model.gravity;
    for (int i = 0; i < 5; ++i) {
      out.H(i) += m * (k.J(0, i) * acc(0) + k.J(1, i) * acc(1));
      for (int j = i; j < 5; ++j) {
        out.D(i, j) += m * (k.J(0, i) * k.J(0, j) + k.J(1, i) * k.J(1, j)) +
                       chains.inertia[b] * T(b, i) * T(b, j);
      }
    }
  }
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < i; ++j) out.D(i, j) = out.D(j, i);
  return out;
}

inline DynamicsTerms dynamics_terms(const RobotModel& model, const Vec5& q, const Vec5& dq) {
  const BodyChains chains(model);
  const auto t = dynamics_terms_t<double>(model, chains, q, dq);
  return {t.D, t.H, actuation_matrix()};
}

/// Solves D x = b for symmetric positive definite D; usable with AD scalars.
template <class S, int N>
Eigen::Matrix<S, N, 1> spd_solve(const Eigen::Matrix<S, N, N>& D, const Eigen::Matrix<S, N, 1>& b) {
  using std::sqrt;
  Eigen::Matrix<S, N, N> L = Eigen::Matrix<S, N, N>::Zero();
  for (int j = 0; j < N; ++j) {
    S s = D(j, j);
    for (int k = 0; k < j; ++k) s -= L(j, k) * L(j, k);
    L(j, j) = sqrt(s);
    for (int i = j + 1; i < N; ++i) {
      S r = D(i, j);
      for (int k = 0; k < j; ++k) r -= L(i, k) * L(j, k);
      L(i, j) = r / L(j, j);
    }
  }
  Eigen::Matrix<S, N, 1> y;
  for (int i = 0; i < N; ++i) {
    S r = b(i);
    for (int k = 0; k < i; ++k) r -= L(i, k) * y(k);
    y(i) = r / L(i, i);
  }
  Eigen::Matrix<S, N, 1> x;
  for (int i = N - 1; i >= 0; --i) {
    S r = y(i);
    for (int k = i + 1; k < N; ++k) r -= L(k, i) * x(k);
    x(i) = r / L(i, i);
  }
  return x;
}

/// ddq = D^{-1}(B u - H) without clamping; generic in the scalar type.
template <class S>
Vec5T<S> forward_dynamics_t(const RobotModel& model, const BodyChains& chains, const Vec5T<S>& q,
                            const Vec5T<S>& dq, const Eigen::Matrix<S, 4, 1>& u) {
  const auto t = dynamics_terms_t<S>(model, chains, q, dq);
  Vec5T<S> rhs = -t.H;
  for (int i = 0; i < 4; ++i) rhs(i + 1) += u(i);
  return spd_solve<S, 5>(t.D, rhs);
}

inline Vec4 clamp_torques(const RobotModel& model, const Vec4& u, bool* clamped = nullptr) {
  const Vec4 lim = torque_limits(model);
  const Vec4 out = u.cwiseMax(-lim).cwiseMin(lim);
  if (clamped) *clamped = (out != u);
  return out;
}

/// Accelerations of the pinned model. Torques beyond the model limits are
/// clamped with a warning; a numerically singular inertia matrix raises
/// IntegrationFault.
inline Vec5 forward_dynamics(const RobotModel& model, const HybridState& state, const Vec4& u) {
  if (!state.finite() || !u.allFinite()) throw IntegrationFault("forward_dynamics: non-finite input");
  bool clamped = false;
  const Vec4 uc = clamp_torques(model, u, &clamped);
  if (clamped) log::warn_limited("fd-clamp", "forward_dynamics: torque command clamped to limits");
  const DynamicsTerms t = dynamics_terms(model, state.q, state.dq);
  const Eigen::SelfAdjointEigenSolver<Mat5> eig(t.D, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) throw IntegrationFault("forward_dynamics: singular inertia matrix");
  return t.D.ldlt().solve(t.B_act * uc - t.H);
}

// ---------------------------------------------------------------------------
// Task-space quantities

template <class S>
struct ComKinematics {
  Vec2T<S> pos, vel, bias;
  Eigen::Matrix<S, 2, 5> J;
};

template <class S>
ComKinematics<S> com_kinematics_t(const BodyChains& chains, const LinkTrig<S>& t) {
  ComKinematics<S> c;
  c.pos.setZero();
  c.vel.setZero();
  c.bias.setZero();
  c.J.setZero();
  for (int b = 0; b < 5; ++b) {
    const PointKinematics<S> k = eval_point(chains.com[b], t);
    const double w = chains.mass[b] / chains.total_mass;
    c.pos += w * k.pos;
    c.vel += w * k.vel;
    c.bias += w * k.bias;
    c.J += w * k.J;
  }
  return c;
}

struct PointState {
  Eigen::Vector2d pos;  // (x, z) relative to the stance foot
  Eigen::Vector2d vel;
};

inline PointState com_state(const RobotModel& model, const HybridState& state) {
  const BodyChains chains(model);
  const auto c = com_kinematics_t<double>(chains, LinkTrig<double>(state.q, state.dq));
  return {c.pos, c.vel};
}

inline PointState swing_foot_pose(const RobotModel& model, const HybridState& state) {
  const BodyChains chains(model);
  const auto k = eval_point<double>(chains.swing_foot, LinkTrig<double>(state.q, state.dq));
  return {k.pos, k.vel};
}

inline Eigen::Vector2d hip_position(const RobotModel& model, const Vec5& q) {
  const BodyChains chains(model);
  return eval_point<double>(chains.hip, LinkTrig<double>(q, Vec5::Zero())).pos;
}

/// Controlled outputs y_a(q) = (COM height, torso pitch, swing foot x, swing
/// foot z), all relative to the stance foot.
template <class S>
struct OutputKinematics {
  Eigen::Matrix<S, 4, 1> y, dy, bias;  // bias = Jdot * dq
  Eigen::Matrix<S, 4, 5> J;
};

template <class S>
OutputKinematics<S> output_kinematics_t(const BodyChains& chains, const Vec5T<S>& q,
                                        const Vec5T<S>& dq) {
  const LinkTrig<S> t(q, dq);
  const ComKinematics<S> com = com_kinematics_t(chains, t);
  const PointKinematics<S> sw = eval_point(chains.swing_foot, t);
  OutputKinematics<S> o;
  o.y << com.pos(1), q(0) - q(1) - q(2), sw.pos(0), sw.pos(1);
  o.J.row(0) = com.J.row(1);
  o.J.row(1) << S(1.0), S(-1.0), S(-1.0), S(0.0), S(0.0);
  o.J.row(2) = sw.J.row(0);
  o.J.row(3) = sw.J.row(1);
  o.dy << com.vel(1), dq(0) - dq(1) - dq(2), sw.vel(0), sw.vel(1);
  o.bias << com.bias(1), S(0.0), sw.bias(0), sw.bias(1);
  return o;
}

inline OutputKinematics<double> output_kinematics(const RobotModel& model, const HybridState& s) {
  return output_kinematics_t<double>(BodyChains(model), s.q, s.dq);
}

/// Ground reaction force at the pinned stance foot implied by the
/// accelerations ddq: F = M (a_com + g e_z).
inline Eigen::Vector2d ground_reaction(const RobotModel& model, const HybridState& s,
                                       const Vec5& ddq) {
  const BodyChains chains(model);
  const auto c = com_kinematics_t<double>(chains, LinkTrig<double>(s.q, s.dq));
  Eigen::Vector2d a = c.J * ddq + c.bias;
  a(1) += model.gravity;
  return chains.total_mass * a;
}

// ---------------------------------------------------------------------------
// Guard

/// Swing foot height above the terrain. `stance_foot` is the world position
/// of the stance foot.
inline double guard(const RobotModel& model, const HybridState& state,
                    const Eigen::Vector2d& stance_foot = Eigen::Vector2d::Zero(),
                    const TerrainProfile& terrain = {}) {
  const PointState sw = swing_foot_pose(model, state);
  const Eigen::Vector2d world = stance_foot + sw.pos;
  return world(1) - terrain.height(world(0));
}

/// Rate of change of the guard along the motion.
inline double guard_rate(const RobotModel& model, const HybridState& state,
                         const Eigen::Vector2d& stance_foot = Eigen::Vector2d::Zero(),
                         const TerrainProfile& terrain = {}) {
  const PointState sw = swing_foot_pose(model, state);
  const double x = stance_foot(0) + sw.pos(0);
  const double hstep = 1e-6;
  const double slope = (terrain.height(x + hstep) - terrain.height(x - hstep)) / (2.0 * hstep);
  return sw.vel(1) - slope * sw.vel(0);
}

/// Switching event: the guard goes from positive to non-positive while the
/// foot is descending relative to the terrain.
inline bool touchdown_crossing(double guard_before, double guard_after, double guard_rate_after) {
  return guard_before > 0.0 && guard_after <= 0.0 && guard_rate_after < 0.0;
}

// ---------------------------------------------------------------------------
// Impact

/// Inertia matrix of the floating-base model with coordinates
/// (stance foot x, stance foot z, q).
template <class S>
Eigen::Matrix<S, 7, 7> extended_inertia_t(const BodyChains& chains, const Vec5T<S>& q) {
  const LinkTrig<S> t(q, Vec5T<S>::Zero());
  const Mat5& T = angle_map();
  Eigen::Matrix<S, 7, 7> De = Eigen::Matrix<S, 7, 7>::Zero();
  for (int b = 0; b < 5; ++b) {
    const PointKinematics<S> k = eval_point(chains.com[b], t);
    Eigen::Matrix<S, 2, 7> Je;
    Je.template leftCols<2>().setIdentity();
    Je.template rightCols<5>() = k.J;
    De += chains.mass[b] * Je.transpose() * Je;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) De(2 + i, 2 + j) += chains.inertia[b] * T(b, i) * T(b, j);
  }
  return De;
}

template <class S>
Eigen::Matrix<S, 2, 7> swing_foot_jacobian_ext_t(const BodyChains& chains, const Vec5T<S>& q) {
  const LinkTrig<S> t(q, Vec5T<S>::Zero());
  const PointKinematics<S> k = eval_point(chains.swing_foot, t);
  Eigen::Matrix<S, 2, 7> J;
  J.template leftCols<2>().setIdentity();
  J.template rightCols<5>() = k.J;
  return J;
}

struct ImpactResult {
  HybridState post;
  Eigen::Vector2d impulse;        // ground impulse on the new stance foot [N s]
  Eigen::Vector2d lift_velocity;  // old stance foot velocity just after impact
  bool valid = true;              // false if the impulse would pull on the ground
};

/// Plastic impact of the swing foot followed by relabeling. Solves
///   De (dqe+ - dqe-) = Jsw^T F,   Jsw dqe+ = 0
/// on the floating-base model, then expresses the result in the new pinned
/// coordinates.
inline ImpactResult impact_reset(const RobotModel& model, const HybridState& pre) {
  const BodyChains chains(model);
  const auto De = extended_inertia_t<double>(chains, pre.q);
  const auto Jsw = swing_foot_jacobian_ext_t<double>(chains, pre.q);
  Eigen::Matrix<double, 9, 9> K = Eigen::Matrix<double, 9, 9>::Zero();
  K.topLeftCorner<7, 7>() = De;
  K.topRightCorner<7, 2>() = -Jsw.transpose();
  K.bottomLeftCorner<2, 7>() = Jsw;
  Eigen::Matrix<double, 7, 1> dqe = Eigen::Matrix<double, 7, 1>::Zero();
  dqe.tail<5>() = pre.dq;
  Eigen::Matrix<double, 9, 1> rhs = Eigen::Matrix<double, 9, 1>::Zero();
  rhs.head<7>() = De * dqe;
  const Eigen::Matrix<double, 9, 1> sol = K.partialPivLu().solve(rhs);
  if (!sol.allFinite()) throw IntegrationFault("impact_reset: singular impact system");

  ImpactResult r;
  r.impulse = sol.tail<2>();
  r.lift_velocity = sol.head<2>();
  const Mat5& R = relabel_matrix();
  r.post.q = R * pre.q;
  r.post.dq = R * sol.segment<5>(2);
  r.post.stance = other_leg(pre.stance);
  r.post.t_phase = 0.0;
  r.valid = r.impulse(1) >= 0.0;
  return r;
}

/// Kinetic energy of the floating-base model with base velocity `base_vel`.
inline double kinetic_energy_ext(const RobotModel& model, const Vec5& q, const Vec5& dq,
                                 const Eigen::Vector2d& base_vel = Eigen::Vector2d::Zero()) {
  const BodyChains chains(model);
  Eigen::Matrix<double, 7, 1> v;
  v << base_vel, dq;
  return 0.5 * v.dot(extended_inertia_t<double>(chains, q) * v);
}

inline double kinetic_energy(const RobotModel& model, const HybridState& s) {
  const DynamicsTerms t = dynamics_terms(model, s.q, s.dq);
  return 0.5 * s.dq.dot(t.D * s.dq);
}

inline double potential_energy(const RobotModel& model, const HybridState& s) {
  return model.total_mass() * model.gravity * com_state(model, s).pos(1);
}

/// Angular momentum (about the axis normal to the plane, positive for forward
/// pitch) about `point`, with the pinned foot moving at `base_vel`. Positions
/// are relative to the stance foot.
inline double angular_momentum_about(const RobotModel& model, const Vec5& q, const Vec5& dq,
                                     const Eigen::Vector2d& base_vel,
                                     const Eigen::Vector2d& point) {
  const BodyChains chains(model);
  const LinkTrig<double> t(q, dq);
  double L = 0.0;
  for (int b = 0; b < 5; ++b) {
    const auto k = eval_point<double>(chains.com[b], t);
    const Eigen::Vector2d r = k.pos - point;
    const Eigen::Vector2d v = k.vel + base_vel;
    L += chains.mass[b] * (r(1) * v(0) - r(0) * v(1)) + chains.inertia[b] * t.w(b);
  }
  return L;
}

}  // namespace hzdhlip
