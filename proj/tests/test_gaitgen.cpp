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

#include "hzdhlip/gaitgen.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

namespace hzdhlip {
namespace {

const RobotModel& model() {
  static const RobotModel m = RobotModel::desk_default();
  return m;
}

GaitRequest request(double v) {
  GaitRequest r;
  r.v_des = v;
  return r;
}

// Constraint rows counted from the list of transcribed conditions.
int audit_count(const GaitRequest& r) {
  const int N = r.nodes;
  const int dofs = 5, outputs = 4;
  const int defects = (N - 1) * 2 * dofs;
  const int consistency = N * outputs + 2 * outputs;
  const int boundary = dofs + (dofs + 2) + 2 + 3 + 4;
  const int path = 3 * N + (N - 2) + 3 * N + N;
  const int shape = r.step() > 0.0 ? r.degree : 0;
  return defects + consistency + boundary + path + shape;
}

TEST(GaitTranscription, ConstraintCountMatchesAudit) {
  for (double v : {0.0, 0.2}) {
    const GaitRequest r = request(v);
    const GaitTranscription tr(model(), r);
    EXPECT_EQ(tr.problem().num_constraints(), audit_count(r)) << "v = " << v;
    EXPECT_EQ(tr.problem().num_variables(), r.nodes * 14 + 4 * (r.degree + 1) + 4);
  }
}

TEST(GaitTranscription, HlipTargetsFollowTheOrbitFlow) {
  const GaitRequest r = request(0.2);
  const GaitTranscription tr(model(), r);
  const double lam = std::sqrt(model().gravity / r.com_height);
  // Period-1 orbit from the closed form of the symmetric orbit.
  const double l = r.v_des * r.t_ssp;
  const double v_star = 0.5 * lam * l / std::tanh(0.5 * lam * r.t_ssp);
  const Eigen::Vector2d post(-0.5 * l, v_star);
  for (int k = 0; k < r.nodes; ++k) {
    const Eigen::Vector2d ref = oracle::rk4_lip(post, lam, tr.time(k), 1e-5);
    EXPECT_NEAR(tr.hlip_reference(k).p, ref(0), 1e-9) << k;
    EXPECT_NEAR(tr.hlip_reference(k).v, ref(1), 1e-9) << k;
  }
  EXPECT_NEAR(tr.hlip_reference(r.nodes - 1).p, 0.5 * l, 1e-9);
}

TEST(GaitTranscription, ZeroSpeedBandCentersOnZero) {
  const GaitTranscription tr(model(), request(0.0));
  for (int k = 0; k < tr.nodes(); ++k) {
    EXPECT_NEAR(tr.hlip_reference(k).p, 0.0, 1e-15);
    EXPECT_NEAR(tr.hlip_reference(k).v, 0.0, 1e-15);
  }
}

TEST(GaitTranscription, RejectsImplausibleRequests) {
  GaitRequest r = request(0.2);
  r.com_height = 0.6;
  EXPECT_THROW(GaitTranscription(model(), r), InfeasibleSpec);
  r = request(3.0);
  EXPECT_THROW(GaitTranscription(model(), r), InfeasibleSpec);
  r = request(0.2);
  r.nodes = 4;
  EXPECT_THROW(GaitTranscription(model(), r), InfeasibleSpec);
  r = request(0.2);
  r.t_ssp = 0.0;
  EXPECT_THROW(GaitTranscription(model(), r), InfeasibleSpec);
}

TEST(GaitTranscription, AutodiffJacobianMatchesFiniteDifferences) {
  const GaitTranscription tr(model(), request(0.2));
  const auto& p = tr.problem();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::VectorXd base = ramp_guess(tr);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd x = base;
    for (int i = 0; i < x.size(); ++i) x(i) += 0.05 * u(rng) * (1.0 + std::abs(x(i)));
    x = p.clamp(x);
    const Eigen::MatrixXd J = p.constraint_jacobian(x);
    const Eigen::MatrixXd Jfd = oracle::fd_jacobian(
        [&](const Eigen::VectorXd& z) { return p.evaluate_constraints(z); }, x, 1e-6);
    const double err = ((J - Jfd).array().abs() / (1.0 + J.array().abs())).maxCoeff();
    EXPECT_LT(err, 1e-5) << "trial " << trial;
    Eigen::MatrixXd Jr;
    p.cost_residuals(x, &Jr);
    const Eigen::MatrixXd Jrfd = oracle::fd_jacobian(
        [&](const Eigen::VectorXd& z) { return p.cost_residuals(z); }, x, 1e-6);
    EXPECT_LT(((Jr - Jrfd).array().abs() / (1.0 + Jr.array().abs())).maxCoeff(), 1e-5);
  }
}

TEST(GaitTranscription, RampGuessIsPeriodicInConfiguration) {
  const GaitTranscription tr(model(), request(0.2));
  const Eigen::VectorXd x = ramp_guess(tr);
  const Eigen::MatrixXd t = tr.trajectory(x);
  const Vec5 q0 = t.row(0).head<5>().transpose(), qN = t.row(tr.nodes() - 1).head<5>().transpose();
  EXPECT_LT((q0 - relabel_matrix() * qN).cwiseAbs().maxCoeff(), 1e-6);
  HybridState pre;
  pre.q = qN;
  EXPECT_NEAR(swing_foot_pose(model(), pre).pos(0), 0.05, 1e-6);
  EXPECT_NEAR(swing_foot_pose(model(), pre).pos(1), 0.0, 1e-6);
}

TEST(GaitCost, ZeroTorqueGivesZeroCost) {
  const GaitRequest r = request(0.2);
  Eigen::MatrixXd traj = Eigen::MatrixXd::Random(r.nodes, 14);
  traj.rightCols<4>().setZero();
  const GaitCost c = gait_cost(model(), r, traj);
  EXPECT_EQ(c.total, 0.0);
}

TEST(GaitCost, TorqueTermIsQuadratic) {
  const GaitRequest r = request(0.2);
  Eigen::MatrixXd traj = Eigen::MatrixXd::Random(r.nodes, 14);
  const GaitCost a = gait_cost(model(), r, traj);
  traj.rightCols<4>() *= 2.0;
  const GaitCost b = gait_cost(model(), r, traj);
  EXPECT_NEAR(b.torque, 4.0 * a.torque, 1e-12 * b.torque);
  EXPECT_NEAR(b.transport, 2.0 * a.transport, 1e-12 * (1.0 + b.transport));
}

TEST(GaitCost, OnlyPositivePowerCounts) {
  const GaitRequest r = request(0.2);
  Eigen::MatrixXd traj = Eigen::MatrixXd::Zero(r.nodes, 14);
  traj.col(6).setConstant(2.0);   // stance knee rate
  traj.col(10).setConstant(-3.0);  // its torque: negative power
  EXPECT_EQ(gait_cost(model(), r, traj).transport, 0.0);
  traj.col(10).setConstant(3.0);
  const double m_g_l = model().total_mass() * model().gravity * 0.05;
  EXPECT_NEAR(gait_cost(model(), r, traj).transport, 6.0 * r.t_ssp / m_g_l, 1e-12);
}

TEST(GaitCost, SmoothedObjectiveBoundsExactCostFromAbove) {
  const GaitTranscription tr(model(), request(0.2));
  const Eigen::VectorXd x = ramp_guess(tr);
  const GaitCost exact = gait_cost(model(), tr.request(), tr.trajectory(x));
  const double smooth = tr.problem().evaluate_cost(x);
  EXPECT_GE(smooth, exact.total);
  // Smoothing adds at most eps/2 per joint, integrated over the step.
  const double m_g_l = model().total_mass() * model().gravity * 0.05;
  EXPECT_LE(smooth - exact.total, 2.0 * tr.request().power_smoothing * tr.request().t_ssp / m_g_l + 1e-12);
}

TEST(GaitLibrary, InsertKeepsSpeedsOrderedAndUnique) {
  GaitLibrary lib;
  for (double v : {0.2, 0.0, 0.1, 0.2}) {
    Gait g;
    g.v_des = v;
    g.outputs = OutputSet::from_alpha(Eigen::MatrixXd::Zero(4, 6));
    lib.insert(g);
  }
  ASSERT_EQ(lib.gaits.size(), 3u);
  EXPECT_EQ(lib.gaits[0].v_des, 0.0);
  EXPECT_EQ(lib.gaits[2].v_des, 0.2);
  EXPECT_NO_THROW(lib.validate());
  EXPECT_EQ(lib.nearest(0.14).v_des, 0.1);
  lib.gaits[1].t_ssp = 0.3;
  EXPECT_THROW(lib.validate(), InvalidArgument);
}

TEST(GaitSolve, ReportsFailureLoudly) {
  const GaitTranscription tr(model(), request(0.2));
  GaitSolveOptions opt;
  opt.solver.max_iterations = 1;
  try {
    solve_gait(tr, ramp_guess(tr), opt);
    FAIL() << "expected SolverFailure";
  } catch (const SolverFailure& e) {
    EXPECT_NE(std::string(e.what()).find("max residual"), std::string::npos);
  }
}

TEST(GaitSolve, FeasibilityOnlyRun) {
  GaitRequest r = request(0.1);
  r.w_cot = 0.0;
  r.w_torque = 0.0;
  const GaitTranscription tr(model(), r);
  const Gait g = solve_gait(tr, ramp_guess(tr));
  EXPECT_LT(g.report.max_violation, 1e-6);
}

class SolvedGait : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tr_ = new GaitTranscription(model(), request(0.2));
    guess_ = new Eigen::VectorXd(ramp_guess(*tr_));
    gait_ = new Gait(solve_gait(*tr_, *guess_));
  }
  static void TearDownTestSuite() {
    delete gait_;
    delete guess_;
    delete tr_;
  }
  static GaitTranscription* tr_;
  static Eigen::VectorXd* guess_;
  static Gait* gait_;
};
GaitTranscription* SolvedGait::tr_ = nullptr;
Eigen::VectorXd* SolvedGait::guess_ = nullptr;
Gait* SolvedGait::gait_ = nullptr;

TEST_F(SolvedGait, ResidualAndRuntime) {
  EXPECT_LT(gait_->report.max_violation, 1e-6) << gait_->report.worst_constraint;
  EXPECT_LT(gait_->report.solve_seconds, 120.0);
}

TEST_F(SolvedGait, ImpactInvariance) {
  EXPECT_LT(gait_->report.impact_output_error, 1e-6);
  EXPECT_LT(gait_->report.impact_velocity_error, 1e-6);
}

TEST_F(SolvedGait, PreImpactComCoincidesWithHlipOrbit) {
  const OrbitSpec orbit = period1_orbit(0.2, tr_->request().hlip(model()));
  EXPECT_LE(std::abs(gait_->z_hlip.p - orbit.z_star[0].p), tr_->request().eps_hlip_p + 1e-9);
  EXPECT_LE(std::abs(gait_->z_hlip.v - orbit.z_star[0].v), tr_->request().eps_hlip_v + 1e-9);
  const PointState com = com_state(model(), gait_->preimpact_state());
  EXPECT_NEAR(com.pos(0), gait_->z_hlip.p, 1e-12);
  EXPECT_NEAR(com.vel(0), gait_->z_hlip.v, 1e-12);
}

TEST_F(SolvedGait, CostDoesNotExceedInitialGuess) {
  EXPECT_LE(tr_->problem().evaluate_cost(tr_->pack(gait_->trajectory, gait_->outputs.alpha(), gait_->impact)),
            tr_->problem().evaluate_cost(*guess_));
}

TEST_F(SolvedGait, TrapezoidalCostMatchesFineGridIntegration) {
  // Fine-grid integration of the piecewise-linear interpolant of (dq, u).
  const Eigen::MatrixXd& t = gait_->trajectory;
  const int N = gait_->nodes(), sub = 200;
  const double h = gait_->t_ssp / (N - 1);
  std::vector<double> power, torque;
  for (int k = 0; k + 1 < N; ++k) {
    for (int s = (k == 0 ? 0 : 1); s <= sub; ++s) {
      const double a = static_cast<double>(s) / sub;
      const Eigen::RowVectorXd row = (1.0 - a) * t.row(k) + a * t.row(k + 1);
      double p = 0.0, q = 0.0;
      for (int j = 0; j < 4; ++j) {
        p += std::max(0.0, row(10 + j) * row(6 + j));
        q += row(10 + j) * row(10 + j);
      }
      power.push_back(p);
      torque.push_back(q);
    }
  }
  const double dt = h / sub;
  const GaitCost c = gait_cost(model(), tr_->request(), t);
  const double m_g_l = model().total_mass() * model().gravity * 0.05;
  const double fine = oracle::simpson(power, dt) / m_g_l + 1e-3 * oracle::simpson(torque, dt);
  EXPECT_NEAR(c.total, fine, 0.01 * fine);
}

TEST_F(SolvedGait, WarmStartAtSameSpeedIsVerbatim) {
  GaitLibrary lib;
  lib.insert(*gait_);
  const Eigen::VectorXd x = warm_start(lib, *tr_);
  EXPECT_EQ(tr_->trajectory(x), gait_->trajectory);
  EXPECT_EQ(tr_->alpha(x), gait_->outputs.alpha());
}

TEST_F(SolvedGait, WarmStartScalesVelocities) {
  GaitLibrary lib;
  lib.insert(*gait_);
  const GaitTranscription tr(model(), request(0.25));
  const Eigen::MatrixXd t = tr.trajectory(warm_start(lib, tr));
  EXPECT_LT((t.middleCols<5>(5) - 1.25 * gait_->trajectory.middleCols<5>(5)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(t.leftCols<5>(), gait_->trajectory.leftCols<5>());
}

TEST(GaitSolve, EmptyLibraryFallsBackToRampGuess) {
  const GaitTranscription tr(model(), request(0.1));
  EXPECT_EQ(warm_start(GaitLibrary{}, tr), ramp_guess(tr));
}

}  // namespace
}  // namespace hzdhlip
