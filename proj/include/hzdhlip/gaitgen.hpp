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

// Periodic walking gaits by trapezoidal direct collocation.
//
// Decision variables: per node k = 0..N-1 the state and input (q, dq, u),
// the 4 x (b+1) Bezier coefficient matrix alpha, and the impact block
// (ground impulse F, post-impact velocity of the old stance foot). Node 0 is
// the post-impact state, node N-1 the pre-impact state.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <ceres/ceres.h>
#include <Eigen/Dense>

#include "hzdhlip/bezier.hpp"
#include "hzdhlip/dynamics.hpp"
#include "hzdhlip/gait.hpp"
#include "hzdhlip/hlip.hpp"
#include "hzdhlip/ik.hpp"
#include "hzdhlip/io.hpp"
#include "hzdhlip/log.hpp"
#include "hzdhlip/nlp.hpp"
#include "hzdhlip/sqp.hpp"

namespace hzdhlip {

inline constexpr int kNodeSize = 14;  // q(5), dq(5), u(4)
inline constexpr int kImpactSize = 4;  // impulse (x, z), old stance foot velocity (x, z)

struct GaitRequest {
  double v_des = 0.0;             // [m/s]
  double t_ssp = 0.25;            // [s]
  std::optional<double> step_length;  // [m], defaults to v_des * t_ssp
  double com_height = 0.50;       // d0 [m]
  double clearance = 0.04;        // swing foot height at mid-step [m]
  double friction = 0.7;          // pyramid coefficient
  int nodes = 13;
  int degree = kDefaultBezierDegree;
  double eps_hlip_p = 0.005;      // [m]
  double eps_hlip_v = 0.02;       // [m/s]
  double eps_z = 0.005;           // [m]
  double touchdown_velocity = 0.05;  // minimum descent speed at the guard [m/s]
  double torso_limit = 0.3;       // |torso pitch| [rad]
  double max_joint_velocity = 15.0;  // [rad/s]
  double w_cot = 1.0;
  double w_torque = 1e-3;
  double power_smoothing = 1e-2;  // [W], smooth positive part used by the optimizer

  double step() const { return step_length.value_or(v_des * t_ssp); }
  HlipParams hlip(const RobotModel& model) const {
    return HlipParams(com_height, t_ssp, 0.0, model.gravity);
  }
  double node_spacing() const { return t_ssp / (nodes - 1); }

  /// Rejects requests that cannot be transcribed sensibly.
  void validate(const RobotModel& model) const {
    model.validate();
    const auto fail = [](const std::string& m) { throw InfeasibleSpec("GaitRequest: " + m); };
    if (!std::isfinite(v_des) || !(t_ssp > 0.0)) fail("speed must be finite and period positive");
    if (nodes < 5) fail("at least 5 collocation nodes are required");
    if (degree < 3) fail("Bezier degree must be at least 3");
    const double standing = com_state(model, HybridState{}).pos(1);
    if (!(com_height > 0.3 * standing) || com_height > 0.97 * standing) {
      std::ostringstream os;
      os << "COM height " << com_height << " m is outside the reachable range (0.3 .. 0.97) x "
         << standing << " m";
      fail(os.str());
    }
    const double l = std::abs(step());
    const double reach = 2.0 * std::sqrt(std::max(0.0, std::pow(model.leg_length(), 2) -
                                                           std::pow(com_height, 2)));
    if (l > 0.8 * reach) {
      std::ostringstream os;
      os << "step length " << l << " m exceeds 80% of the kinematic reach " << reach << " m";
      fail(os.str());
    }
    if (clearance < 0.0 || friction <= 0.0 || eps_hlip_p <= 0.0 || eps_hlip_v <= 0.0 || eps_z <= 0.0) {
      fail("clearance, friction and band widths must be positive");
    }
  }
};

namespace collocation {

template <class T>
using NodeMap = Eigen::Map<const Eigen::Matrix<T, kNodeSize, 1>>;

/// Trapezoidal defects between consecutive nodes.
struct Defect {
  const RobotModel* model;
  const BodyChains* chains;
  double h;

  template <class T>
  bool operator()(const T* a, const T* b, T* r) const {
    const NodeMap<T> x0(a), x1(b);
    const Vec5T<T> q0 = x0.template head<5>(), dq0 = x0.template segment<5>(5);
    const Vec5T<T> q1 = x1.template head<5>(), dq1 = x1.template segment<5>(5);
    const Eigen::Matrix<T, 4, 1> u0 = x0.template tail<4>(), u1 = x1.template tail<4>();
    const Vec5T<T> f0 = forward_dynamics_t<T>(*model, *chains, q0, dq0, u0);
    const Vec5T<T> f1 = forward_dynamics_t<T>(*model, *chains, q1, dq1, u1);
    for (int i = 0; i < 5; ++i) {
      r[i] = q1(i) - q0(i) - T(0.5 * h) * (dq0(i) + dq1(i));
      r[5 + i] = dq1(i) - dq0(i) - T(0.5 * h) * (f0(i) + f1(i));
    }
    return true;
  }
};

/// Actual outputs equal the Bezier outputs at tau_k (and optionally their
/// time derivatives, with dtau/dt = rate).
struct Consistency {
  const BodyChains* chains;
  Eigen::VectorXd basis, dbasis;
  double rate;
  bool with_velocity;
  int degree;

  template <class T>
  bool operator()(T const* const* p, T* r) const {
    const T* alpha = p[1];
    const NodeMap<T> x(p[0]);
    const Vec5T<T> q = x.template head<5>(), dq = x.template segment<5>(5);
    const auto o = output_kinematics_t<T>(*chains, q, dq);
    const int nc = degree + 1;
    for (int i = 0; i < 4; ++i) {
      T yd(0.0), dyd(0.0);
      for (int j = 0; j < nc; ++j) {
        yd += basis(j) * alpha[i * nc + j];
        dyd += dbasis(j) * alpha[i * nc + j];
      }
      r[i] = o.y(i) - yd;
      if (with_velocity) r[4 + i] = o.dy(i) - dyd * rate;
    }
    return true;
  }
};

/// q(0) = R q(N-1).
struct Periodicity {
  template <class T>
  bool operator()(const T* first, const T* last, T* r) const {
    const Mat5& R = relabel_matrix();
    for (int i = 0; i < 5; ++i) {
      T s = first[i];
      for (int j = 0; j < 5; ++j) s -= R(i, j) * last[j];
      r[i] = s;
    }
    return true;
  }
};

/// Plastic impact: De (v+ - v-) = Jsw^T F and Jsw v+ = 0, with
/// v- = (0, dq(N-1)) and v+ = (foot velocity, R dq(0)).
struct Impact {
  const BodyChains* chains;

  template <class T>
  bool operator()(const T* last, const T* first, const T* imp, T* r) const {
    const NodeMap<T> xl(last), xf(first);
    const Vec5T<T> q = xl.template head<5>();
    const Eigen::Matrix<T, 7, 7> De = extended_inertia_t<T>(*chains, q);
    const Eigen::Matrix<T, 2, 7> J = swing_foot_jacobian_ext_t<T>(*chains, q);
    const Mat5& R = relabel_matrix();
    Eigen::Matrix<T, 7, 1> vp, vm;
    vm << T(0.0), T(0.0), xl.template segment<5>(5);
    vp(0) = imp[2];
    vp(1) = imp[3];
    for (int i = 0; i < 5; ++i) {
      T s(0.0);
      for (int j = 0; j < 5; ++j) s += R(i, j) * xf(5 + j);
      vp(2 + i) = s;
    }
    Eigen::Matrix<T, 2, 1> F(imp[0], imp[1]);
    const Eigen::Matrix<T, 7, 1> mom = De * (vp - vm) - J.transpose() * F;
    const Eigen::Matrix<T, 2, 1> foot = J * vp;
    for (int i = 0; i < 7; ++i) r[i] = mom(i);
    r[7] = foot(0);
    r[8] = foot(1);
    return true;
  }
};

/// Touchdown: swing foot height, vertical speed and position.
struct Touchdown {
  const BodyChains* chains;

  template <class T>
  bool operator()(const T* last, T* r) const {
    const NodeMap<T> x(last);
    const Vec5T<T> q = x.template head<5>(), dq = x.template segment<5>(5);
    const auto k = eval_point<T>(chains->swing_foot, LinkTrig<T>(q, dq));
    r[0] = k.pos(1);
    r[1] = k.vel(1);
    r[2] = k.pos(0);
    return true;
  }
};

/// Impulse unilaterality and friction, and lift-off of the old stance foot.
struct ImpulseCone {
  double mu;

  template <class T>
  bool operator()(const T* imp, T* r) const {
    r[0] = imp[1];
    r[1] = imp[0] - mu * imp[1];
    r[2] = -imp[0] - mu * imp[1];
    r[3] = imp[3];
    return true;
  }
};

/// Ground reaction of the pinned foot: unilateral and inside the pyramid.
struct GroundReaction {
  const RobotModel* model;
  const BodyChains* chains;
  double mu;

  template <class T>
  bool operator()(const T* node, T* r) const {
    const NodeMap<T> x(node);
    const Vec5T<T> q = x.template head<5>(), dq = x.template segment<5>(5);
    const Eigen::Matrix<T, 4, 1> u = x.template tail<4>();
    const Vec5T<T> ddq = forward_dynamics_t<T>(*model, *chains, q, dq, u);
    const auto c = com_kinematics_t<T>(*chains, LinkTrig<T>(q, dq));
    Vec2T<T> a = c.J * ddq + c.bias;
    a(1) += T(model->gravity);
    const Vec2T<T> F = chains->total_mass * a;
    r[0] = F(1);
    r[1] = F(0) - mu * F(1);
    r[2] = -F(0) - mu * F(1);
    return true;
  }
};

struct SwingHeight {
  const BodyChains* chains;

  template <class T>
  bool operator()(const T* node, T* r) const {
    const NodeMap<T> x(node);
    const Vec5T<T> q = x.template head<5>();
    r[0] = eval_point<T>(chains->swing_foot, LinkTrig<T>(q, Vec5T<T>::Zero())).pos(1);
    return true;
  }
};

/// COM x position/velocity minus the HLIP reference, and COM height.
struct HlipBand {
  const BodyChains* chains;
  double p_ref, v_ref;

  template <class T>
  bool operator()(const T* node, T* r) const {
    const NodeMap<T> x(node);
    const Vec5T<T> q = x.template head<5>(), dq = x.template segment<5>(5);
    const auto c = com_kinematics_t<T>(*chains, LinkTrig<T>(q, dq));
    r[0] = c.pos(0) - p_ref;
    r[1] = c.vel(0) - v_ref;
    r[2] = c.pos(1);
    return true;
  }
};

struct TorsoPitch {
  template <class T>
  bool operator()(const T* node, T* r) const {
    r[0] = node[0] - node[1] - node[2];
    return true;
  }
};

/// Consecutive differences of the swing-x Bezier coefficients.
struct SwingMonotone {
  int degree;

  template <class T>
  bool operator()(T const* const* p, T* r) const {
    const T* alpha = p[0];
    const int base = OutputSet::kSwingX * (degree + 1);
    for (int j = 0; j < degree; ++j) r[j] = alpha[base + j + 1] - alpha[base + j];
    return true;
  }
};

/// sqrt(weight * smooth_positive_part(u_j dq_j)) for the four joints.
struct PositivePower {
  double weight, eps;

  template <class T>
  bool operator()(const T* node, T* r) const {
    using std::sqrt;
    for (int j = 0; j < 4; ++j) {
      const T p = node[10 + j] * node[6 + j];
      r[j] = sqrt(T(weight) * T(0.5) * (p + sqrt(p * p + T(eps * eps))));
    }
    return true;
  }
};

struct TorqueSquared {
  double sqrt_weight;

  template <class T>
  bool operator()(const T* node, T* r) const {
    for (int j = 0; j < 4; ++j) r[j] = T(sqrt_weight) * node[10 + j];
    return true;
  }
};

}  // namespace collocation

/// Quadrature weight of node k for the trapezoidal rule.
inline double trapezoid_weight(int k, int nodes, double h) {
  return (k == 0 || k == nodes - 1) ? 0.5 * h : h;
}

/// Transcribed gait problem with the layout needed to unpack solutions.
class GaitTranscription {
 public:
  GaitTranscription(const RobotModel& model, const GaitRequest& request)
      : model_(model), request_(request), chains_(std::make_unique<BodyChains>(model)) {
    request_.validate(model_);
    hlip_ = std::make_unique<HlipParams>(request_.hlip(model_));
    orbit_ = period1_orbit(request_.v_des, *hlip_);
    build();
  }

  GaitTranscription(const GaitTranscription&) = delete;
  GaitTranscription& operator=(const GaitTranscription&) = delete;

  const RobotModel& model() const { return model_; }
  const GaitRequest& request() const { return request_; }
  const HlipParams& hlip() const { return *hlip_; }
  const OrbitSpec& orbit() const { return orbit_; }
  const nlp::NlpProblem& problem() const { return problem_; }
  int nodes() const { return request_.nodes; }
  int node_block(int k) const { return node_blocks_.at(k); }
  int alpha_block() const { return alpha_block_; }
  int impact_block() const { return impact_block_; }
  double tau(int k) const { return static_cast<double>(k) / (nodes() - 1); }
  double time(int k) const { return tau(k) * request_.t_ssp; }

  /// HLIP reference (position, velocity) at node k: the LIP flow from the
  /// orbit's post-impact state (p* - l, v*).
  HlipState hlip_reference(int k) const {
    const HlipState post{orbit_.z(0).p - orbit_.l(0), orbit_.z(0).v};
    return lip_flow(post, *hlip_, time(k));
  }

  Eigen::Matrix<double, kNodeSize, 1> node(const Eigen::VectorXd& x, int k) const {
    return x.segment<kNodeSize>(problem_.blocks()[node_blocks_[k]].offset);
  }
  Eigen::MatrixXd alpha(const Eigen::VectorXd& x) const {
    const auto& b = problem_.blocks()[alpha_block_];
    Eigen::MatrixXd a(4, request_.degree + 1);
    for (int i = 0; i < 4; ++i) a.row(i) = x.segment(b.offset + i * a.cols(), a.cols()).transpose();
    return a;
  }
  Eigen::Vector4d impact(const Eigen::VectorXd& x) const {
    return x.segment<kImpactSize>(problem_.blocks()[impact_block_].offset);
  }

  /// Assembles a decision vector from its parts.
  Eigen::VectorXd pack(const Eigen::MatrixXd& trajectory, const Eigen::MatrixXd& alpha,
                       const Eigen::Vector4d& impact) const {
    Eigen::VectorXd x(problem_.num_variables());
    for (int k = 0; k < nodes(); ++k) {
      x.segment<kNodeSize>(problem_.blocks()[node_blocks_[k]].offset) = trajectory.row(k).transpose();
    }
    const auto& b = problem_.blocks()[alpha_block_];
    for (int i = 0; i < 4; ++i) x.segment(b.offset + i * alpha.cols(), alpha.cols()) = alpha.row(i).transpose();
    x.segment<kImpactSize>(problem_.blocks()[impact_block_].offset) = impact;
    return x;
  }

  Eigen::MatrixXd trajectory(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd t(nodes(), kNodeSize);
    for (int k = 0; k < nodes(); ++k) t.row(k) = node(x, k).transpose();
    return t;
  }

 private:
  void build() {
    using namespace collocation;
    const int N = nodes(), b = request_.degree, na = 4 * (b + 1);
    const double h = request_.node_spacing(), mu = request_.friction;
    const Vec4 tl = torque_limits(model_);
    Eigen::Matrix<double, kNodeSize, 1> lo, hi;
    const double vmax = request_.max_joint_velocity;
    lo << -0.8, model_.knee_range.lower, model_.hip_range.lower, model_.hip_range.lower,
        model_.knee_range.lower, Vec5::Constant(-vmax), -tl;
    hi << 0.8, model_.knee_range.upper, model_.hip_range.upper, model_.hip_range.upper,
        model_.knee_range.upper, Vec5::Constant(vmax), tl;
    for (int k = 0; k < N; ++k) node_blocks_.push_back(problem_.add_block("node" + std::to_string(k), lo, hi));
    alpha_block_ = problem_.add_block("alpha", na);
    impact_block_ = problem_.add_block("impact", kImpactSize);
    const BodyChains* ch = chains_.get();
    const double inf = nlp::kInf;
    const auto vec = [](std::initializer_list<double> v) {
      Eigen::VectorXd out(v.size());
      int i = 0;
      for (double d : v) out(i++) = d;
      return out;
    };

    for (int k = 0; k + 1 < N; ++k) {
      problem_.add_equality("defect" + std::to_string(k), {node_blocks_[k], node_blocks_[k + 1]},
                            new ceres::AutoDiffCostFunction<Defect, 10, kNodeSize, kNodeSize>(
                                new Defect{&model_, ch, h}));
    }
    for (int k = 0; k < N; ++k) {
      const double t = tau(k);
      const bool vel = (k == 0 || k == N - 1);
      auto* fn = new Consistency{ch, bernstein_basis(b, t), bernstein_basis_derivative(b, t, 1),
                                 1.0 / request_.t_ssp, vel, b};
      auto* d = new ceres::DynamicAutoDiffCostFunction<Consistency, 8>(fn);
      d->AddParameterBlock(kNodeSize);
      d->AddParameterBlock(na);
      d->SetNumResiduals(vel ? 8 : 4);
      problem_.add_equality("outputs" + std::to_string(k), {node_blocks_[k], alpha_block_}, d);
    }
    problem_.add_equality("periodicity", {node_blocks_[0], node_blocks_[N - 1]},
                          new ceres::AutoDiffCostFunction<Periodicity, 5, kNodeSize, kNodeSize>(
                              new Periodicity));
    problem_.add_equality(
        "impact", {node_blocks_[N - 1], node_blocks_[0], impact_block_},
        new ceres::AutoDiffCostFunction<Impact, 9, kNodeSize, kNodeSize, kImpactSize>(new Impact{ch}));
    problem_.add_constraint("touchdown", {node_blocks_[N - 1]},
                            new ceres::AutoDiffCostFunction<Touchdown, 3, kNodeSize>(new Touchdown{ch}),
                            vec({0.0, -inf, request_.step()}),
                            vec({0.0, -request_.touchdown_velocity, request_.step()}));
    problem_.add_constraint("impulse_cone", {impact_block_},
                            new ceres::AutoDiffCostFunction<ImpulseCone, 4, kImpactSize>(
                                new ImpulseCone{mu}),
                            vec({0.0, -inf, -inf, 0.0}), vec({inf, 0.0, 0.0, inf}));
    for (int k = 0; k < N; ++k) {
      problem_.add_constraint(
          "grf" + std::to_string(k), {node_blocks_[k]},
          new ceres::AutoDiffCostFunction<GroundReaction, 3, kNodeSize>(new GroundReaction{&model_, ch, mu}),
          vec({0.0, -inf, -inf}), vec({inf, 0.0, 0.0}));
    }
    for (int k = 1; k + 1 < N; ++k) {
      const double floor = (k == (N - 1) / 2) ? request_.clearance : 0.0;
      problem_.add_constraint(
          "swing_height" + std::to_string(k), {node_blocks_[k]},
          new ceres::AutoDiffCostFunction<SwingHeight, 1, kNodeSize>(new SwingHeight{ch}),
          vec({floor}), vec({inf}));
    }
    for (int k = 0; k < N; ++k) {
      const HlipState ref = hlip_reference(k);
      const double d0 = request_.com_height;
      problem_.add_constraint(
          "hlip" + std::to_string(k), {node_blocks_[k]},
          new ceres::AutoDiffCostFunction<HlipBand, 3, kNodeSize>(new HlipBand{ch, ref.p, ref.v}),
          vec({-request_.eps_hlip_p, -request_.eps_hlip_v, d0 - request_.eps_z}),
          vec({request_.eps_hlip_p, request_.eps_hlip_v, d0 + request_.eps_z}));
      problem_.add_constraint("torso" + std::to_string(k), {node_blocks_[k]},
                              new ceres::AutoDiffCostFunction<TorsoPitch, 1, kNodeSize>(new TorsoPitch),
                              vec({-request_.torso_limit}), vec({request_.torso_limit}));
    }
    if (request_.step() > 1e-9) {
      auto* d = new ceres::DynamicAutoDiffCostFunction<SwingMonotone, 8>(new SwingMonotone{b});
      d->AddParameterBlock(na);
      d->SetNumResiduals(b);
      problem_.add_constraint("swing_monotone", {alpha_block_}, d, Eigen::VectorXd::Zero(b),
                              Eigen::VectorXd::Constant(b, inf));
    }

    const double mgd = model_.total_mass() * model_.gravity * std::max(std::abs(request_.step()), 0.05);
    for (int k = 0; k < N; ++k) {
      const double w = trapezoid_weight(k, N, h);
      if (request_.w_cot > 0.0) {
        problem_.add_cost("cot" + std::to_string(k), {node_blocks_[k]},
                          new ceres::AutoDiffCostFunction<PositivePower, 4, kNodeSize>(
                              new PositivePower{request_.w_cot * w / mgd, request_.power_smoothing}));
      }
      if (request_.w_torque > 0.0) {
        problem_.add_cost("torque" + std::to_string(k), {node_blocks_[k]},
                          new ceres::AutoDiffCostFunction<TorqueSquared, 4, kNodeSize>(
                              new TorqueSquared{std::sqrt(request_.w_torque * w)}));
      }
    }
  }

  RobotModel model_;
  GaitRequest request_;
  std::unique_ptr<BodyChains> chains_;
  std::unique_ptr<HlipParams> hlip_;
  OrbitSpec orbit_;
  nlp::NlpProblem problem_;
  std::vector<int> node_blocks_;
  int alpha_block_ = -1;
  int impact_block_ = -1;
};

struct GaitCost {
  double transport = 0.0;  // positive mechanical work / (m g |l|)
  double torque = 0.0;     // integral of |u|^2
  double total = 0.0;      // weighted sum
};

/// Exact trapezoidal cost of a node trajectory (rows q, dq, u).
inline GaitCost gait_cost(const RobotModel& model, const GaitRequest& r, const Eigen::MatrixXd& traj) {
  GaitCost c;
  const int N = static_cast<int>(traj.rows());
  const double h = r.t_ssp / (N - 1);
  double work = 0.0;
  for (int k = 0; k < N; ++k) {
    const double w = trapezoid_weight(k, N, h);
    for (int j = 0; j < 4; ++j) {
      work += w * std::max(0.0, traj(k, 10 + j) * traj(k, 6 + j));
      c.torque += w * traj(k, 10 + j) * traj(k, 10 + j);
    }
  }
  c.transport = work / (model.total_mass() * model.gravity * std::max(std::abs(r.step()), 0.05));
  c.total = r.w_cot * c.transport + r.w_torque * c.torque;
  return c;
}

/// Static-pose ramp guess: the configuration at each node is placed by IK on
/// (COM x from the HLIP reference, COM height d0, upright torso, swing foot
/// on a parabolic arc from -l to l); velocities by central differences,
/// torques from inverse dynamics, alpha by least squares on the node outputs.
inline Eigen::VectorXd ramp_guess(const GaitTranscription& tr) {
  const RobotModel& model = tr.model();
  const BodyChains chains(model);
  const GaitRequest& r = tr.request();
  const int N = tr.nodes();
  const double l = r.step(), h = r.node_spacing();
  Eigen::MatrixXd traj = Eigen::MatrixXd::Zero(N, kNodeSize);
  Vec5 q;
  q << 0.15, 0.35, -0.2, 0.1, 0.35;
  const Eigen::Matrix<bool, 5, 1> all = Eigen::Matrix<bool, 5, 1>::Constant(true);
  for (int k = 0; k < N; ++k) {
    const double t = tr.tau(k);
    const double s = t * t * (3.0 - 2.0 * t);
    Vec5 target;
    target << tr.hlip_reference(k).p, r.com_height, 0.0, -l + 2.0 * l * s,
        4.0 * r.clearance * t * (1.0 - t);
    IkOptions opt;
    opt.max_iterations = 200;
    const IkResult ik = solve_ik(chains, q, target, all, all, opt);
    q = ik.q;
    traj.row(k).head<5>() = q.transpose();
  }
  for (int k = 0; k < N; ++k) {
    const int a = std::max(0, k - 1), b = std::min(N - 1, k + 1);
    traj.row(k).segment<5>(5) = (traj.row(b).head<5>() - traj.row(a).head<5>()) / ((b - a) * h);
  }
  const Vec4 lim = torque_limits(model);
  for (int k = 0; k < N; ++k) {
    const int a = std::max(0, k - 1), b = std::min(N - 1, k + 1);
    const Vec5 ddq = ((traj.row(b).segment<5>(5) - traj.row(a).segment<5>(5)) / ((b - a) * h)).transpose();
    const DynamicsTerms t =
        dynamics_terms(model, traj.row(k).head<5>().transpose(), traj.row(k).segment<5>(5).transpose());
    const Vec5 tau = t.D * ddq + t.H;
    traj.row(k).tail<4>() = tau.tail<4>().cwiseMax(-lim).cwiseMin(lim).transpose();
  }
  // Bezier coefficients from the node outputs.
  Eigen::MatrixXd Bm(N, r.degree + 1), Y(N, 4);
  for (int k = 0; k < N; ++k) {
    Bm.row(k) = bernstein_basis(r.degree, tr.tau(k)).transpose();
    HybridState s;
    s.q = traj.row(k).head<5>().transpose();
    Y.row(k) = output_kinematics(model, s).y.transpose();
  }
  const Eigen::MatrixXd alpha = Bm.colPivHouseholderQr().solve(Y).transpose();
  HybridState pre;
  pre.q = traj.row(N - 1).head<5>().transpose();
  pre.dq = traj.row(N - 1).segment<5>(5).transpose();
  const ImpactResult imp = impact_reset(model, pre);
  Eigen::Vector4d iv;
  iv << imp.impulse, imp.lift_velocity;
  return tr.pack(traj, alpha, iv);
}

/// Unpacks a solved decision vector into a Gait and checks it.
inline Gait extract_gait(const GaitTranscription& tr, const Eigen::VectorXd& x,
                         const nlp::SolveReport& rep, double seconds) {
  Gait g;
  const GaitRequest& r = tr.request();
  g.v_des = r.v_des;
  g.t_ssp = r.t_ssp;
  g.com_height = r.com_height;
  g.outputs = OutputSet::from_alpha(tr.alpha(x));
  g.trajectory = tr.trajectory(x);
  g.impact = tr.impact(x);
  g.l_nominal = r.step();
  g.cost = gait_cost(tr.model(), r, g.trajectory).total;
  const PointState com = com_state(tr.model(), g.preimpact_state());
  g.z_hlip = {com.pos(0), com.vel(0)};
  g.report.converged = rep.converged;
  g.report.max_violation = tr.problem().max_violation(x);
  g.report.worst_constraint = tr.problem().worst_constraint(x);
  g.report.outer_iterations = rep.outer_iterations;
  g.report.inner_iterations = rep.inner_iterations;
  g.report.solve_seconds = seconds;
  // Impact invariance: the reset of the final node lands on the zero
  // dynamics surface at tau = 0.
  const ImpactResult imp = impact_reset(tr.model(), g.preimpact_state());
  const VirtualConstraint vc =
      virtual_constraint(output_kinematics(tr.model(), imp.post), g.outputs, PhaseVar::at(0.0, r.t_ssp));
  g.report.impact_output_error = vc.y.cwiseAbs().maxCoeff();
  g.report.impact_velocity_error = vc.dy.cwiseAbs().maxCoeff();
  return g;
}

struct GaitSolveOptions {
  nlp::SqpConfig solver;
  double residual_tolerance = 1e-6;
  bool throw_on_failure = true;
};

/// Solves the transcription from x0 and returns the gait. Throws
/// SolverFailure with a diagnostic if the residual stays above tolerance.
inline Gait solve_gait(const GaitTranscription& tr, Eigen::VectorXd x0, const GaitSolveOptions& opt = {},
                       const nlp::NlpSolver* solver = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const nlp::SqpSolver fallback(opt.solver);
  const nlp::NlpSolver& s = solver ? *solver : fallback;
  const nlp::SolveReport rep = s.solve(tr.problem(), x0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Gait g = extract_gait(tr, x0, rep, secs);
  std::ostringstream os;
  os << "gait v = " << tr.request().v_des << ": " << rep.summary() << ", " << secs << " s";
  log::info(os.str());
  if (g.report.max_violation > opt.residual_tolerance && opt.throw_on_failure) {
    std::ostringstream err;
    err << "gait solve failed for v = " << tr.request().v_des << ": max residual "
        << g.report.max_violation << " at " << g.report.worst_constraint << ", final merit "
        << rep.final_merit;
    throw SolverFailure(err.str());
  }
  return g;
}

/// Initial guess for speed v_new: the nearest library gait with the joint
/// velocities scaled by v_new / v_near, or the ramp guess for an empty library.
inline Eigen::VectorXd warm_start(const GaitLibrary& library, const GaitTranscription& tr) {
  if (library.empty()) return ramp_guess(tr);
  const Gait& g = library.nearest(tr.request().v_des);
  if (g.nodes() != tr.nodes() || g.outputs.degree() != tr.request().degree) return ramp_guess(tr);
  Eigen::MatrixXd traj = g.trajectory;
  Eigen::Vector4d imp = g.impact;
  if (g.v_des != tr.request().v_des && std::abs(g.v_des) > 1e-9) {
    traj.middleCols<5>(5) *= tr.request().v_des / g.v_des;
  }
  return tr.pack(traj, g.outputs.alpha(), imp);
}

/// Generates gaits for increasing speeds, each warm-started from the library
/// built so far.
inline GaitLibrary generate_library(const RobotModel& model, const GaitRequest& base,
                                    std::vector<double> speeds, const GaitSolveOptions& opt = {}) {
  std::sort(speeds.begin(), speeds.end());
  GaitLibrary lib;
  lib.model_hash = io::model_hash(model);
  lib.t_ssp = base.t_ssp;
  lib.degree = base.degree;
  for (double v : speeds) {
    GaitRequest r = base;
    r.v_des = v;
    r.step_length.reset();
    const GaitTranscription tr(model, r);
    lib.insert(solve_gait(tr, warm_start(lib, tr), opt));
  }
  return lib;
}

}  // namespace hzdhlip
