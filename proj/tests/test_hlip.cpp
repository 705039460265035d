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

#include "hzdhlip/hlip.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace hzdhlip {
namespace {

const HlipParams kParams(0.9, 0.25, 0.0, 9.81);

TEST(LipFlow, EquilibriumStaysPut) {
  for (double dt : {0.0, 0.1, 1.7}) {
    const HlipState s = lip_flow({0.0, 0.0}, kParams, dt);
    EXPECT_EQ(s.p, 0.0);
    EXPECT_EQ(s.v, 0.0);
  }
}

TEST(LipFlow, IdentityAtZeroDuration) {
  const HlipState s = lip_flow({0.1, 0.0}, kParams, 0.0);
  EXPECT_DOUBLE_EQ(s.p, 0.1);
  EXPECT_DOUBLE_EQ(s.v, 0.0);
}

TEST(LipFlow, MatchesIntegratedOde) {
  // Frozen from RK4 with step 1e-5.
  const HlipState s = lip_flow({0.05, 0.2}, kParams, 0.25);
  EXPECT_NEAR(s.p, 0.12389397902819192, 1e-8);
  EXPECT_NEAR(s.v, 0.4243370436691475, 1e-8);
  const Eigen::Vector2d live =
      oracle::rk4_lip({0.05, 0.2}, kParams.lambda(), 0.25, 1e-5);
  EXPECT_NEAR(s.p, live(0), 1e-8);
  EXPECT_NEAR(s.v, live(1), 1e-8);
}

TEST(LipFlow, SemigroupProperty) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> pos(-0.2, 0.2), vel(-0.8, 0.8), t(0.0, 0.4);
  for (int i = 0; i < 500; ++i) {
    const HlipState z{pos(rng), vel(rng)};
    const double t1 = t(rng), t2 = t(rng);
    const HlipState a = lip_flow(lip_flow(z, kParams, t1), kParams, t2);
    const HlipState b = lip_flow(z, kParams, t1 + t2);
    EXPECT_NEAR(a.p, b.p, 1e-12);
    EXPECT_NEAR(a.v, b.v, 1e-12);
  }
}

TEST(LipFlow, RejectsNegativeDuration) {
  EXPECT_THROW(lip_flow({0.0, 0.0}, kParams, -0.1), InvalidArgument);
}

TEST(HlipParams, Validation) {
  EXPECT_THROW(HlipParams(0.0, 0.25), InvalidArgument);
  EXPECT_THROW(HlipParams(0.9, 0.0), InvalidArgument);
  EXPECT_THROW(HlipParams(0.9, 0.25, -0.1), InvalidArgument);
  EXPECT_THROW(HlipParams(0.9, 0.25, 0.0, -9.81), InvalidArgument);
  EXPECT_EQ(kParams.lambda(), std::sqrt(9.81 / 0.9));
}

TEST(S2S, DegenerateDurationIsIdentity) {
  const S2SDynamics dyn = s2s_matrices(HlipParams(0.9, 1e-14));
  EXPECT_TRUE(dyn.A.isApprox(Eigen::Matrix2d::Identity(), 1e-12));
  EXPECT_NEAR(dyn.B(0), -1.0, 1e-12);
  EXPECT_NEAR(dyn.B(1), 0.0, 1e-12);
}

TEST(S2S, MatchesOdeFlowMatrix) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  Eigen::Matrix2d frozen;
  frozen << 1.3604070716443368, 0.27936812722986637, 3.0451125868055255, 1.3604070716443384;
  EXPECT_LT((dyn.A - frozen).cwiseAbs().maxCoeff(), 1e-9);
  const Eigen::Matrix2d live = oracle::rk4_flow_matrix(kParams.lambda(), 0.25, 1e-5);
  EXPECT_LT((dyn.A - live).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(S2S, MatchesStepwiseSimulation) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> d0(0.5, 1.2), tssp(0.2, 0.5), tdsp(0.0, 0.15);
  std::uniform_real_distribution<double> pos(-0.2, 0.2), vel(-0.8, 0.8), len(-0.3, 0.3);
  for (int i = 0; i < 200; ++i) {
    const HlipParams params(d0(rng), tssp(rng), tdsp(rng));
    const S2SDynamics dyn = s2s_matrices(params);
    const Eigen::Vector2d z(pos(rng), vel(rng));
    const double l = len(rng);
    const Eigen::Vector2d expected = oracle::stepwise_s2s(z, l, params.lambda(), params.t_ssp(),
                                                          params.t_dssp(), 1e-4);
    EXPECT_LT((dyn.step(z, l) - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Period1, StandingInPlace) {
  const OrbitSpec orbit = period1_orbit(0.0, kParams);
  EXPECT_EQ(orbit.l_star[0], 0.0);
  EXPECT_EQ(orbit.z_star[0].p, 0.0);
  EXPECT_EQ(orbit.z_star[0].v, 0.0);
}

// The S2S map is a saddle (eigenvalues exp(+-lambda T)), so iteration in
// either direction amplifies roundoff. Orbits are checked against the
// symmetric-orbit closed form and by forward iteration over a bounded horizon.

TEST(Period1, FixedPointByIteration) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  for (double v : {0.2, 0.3}) {
    const OrbitSpec orbit = period1_orbit(v, kParams);
    // Time-symmetric orbit: p = l/2, v = lambda (l/2) coth(lambda T / 2).
    const double l = orbit.l_star[0];
    const double lam = kParams.lambda();
    EXPECT_NEAR(orbit.z_star[0].p, l / 2.0, 1e-12);
    EXPECT_NEAR(orbit.z_star[0].v, lam * l / 2.0 / std::tanh(lam * kParams.t_ssp() / 2.0), 1e-12);
    Eigen::Vector2d z;
    EXPECT_LT((dyn.step(orbit.z_star[0].vec(), orbit.l_star[0]) - orbit.z_star[0].vec()).norm(),
              1e-9);
    // Forward iteration stays on the orbit until roundoff growth dominates.
    z = orbit.z_star[0].vec();
    for (int k = 0; k < 15; ++k) {
      z = dyn.step(z, orbit.l_star[0]);
      ASSERT_LT((z - orbit.z_star[0].vec()).norm(), 1e-9) << "iteration " << k;
    }
    EXPECT_NEAR(orbit.l_star[0] / kParams.step_period(), v, 1e-15);
  }
  // Frozen from the RK4-derived flow matrix.
  const OrbitSpec o2 = period1_orbit(0.2, kParams);
  EXPECT_NEAR(o2.z_star[0].p, 0.025, 1e-9);
  EXPECT_NEAR(o2.z_star[0].v, 0.21122730562085204, 1e-9);
  const OrbitSpec o3 = period1_orbit(0.3, kParams);
  EXPECT_NEAR(o3.z_star[0].p, 0.0375, 1e-9);
  EXPECT_NEAR(o3.z_star[0].v, 0.31684095843127796, 1e-9);
}

TEST(Period2, MirrorSymmetricInPlace) {
  const OrbitSpec orbit = period2_orbit(0.0, 0.2, kParams);
  EXPECT_NEAR(orbit.l_star[0], -orbit.l_star[1], 1e-15);
  EXPECT_NEAR(orbit.z_star[0].p, -orbit.z_star[1].p, 1e-12);
  EXPECT_NEAR(orbit.z_star[0].v, -orbit.z_star[1].v, 1e-12);
  EXPECT_NEAR(std::abs(orbit.l_star[0]), 0.2, 1e-15);
  EXPECT_NEAR(orbit.z_star[0].p, 0.1, 1e-9);
  EXPECT_NEAR(orbit.z_star[0].v, 0.12900794203621058, 1e-9);
}

TEST(Period2, TwoCycleByIteration) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  const OrbitSpec orbit = period2_orbit(0.0, 0.2, kParams);
  // Mirror symmetry gives z_L = -z_R, hence (I + A) z_L = B l_R.
  const Eigen::Vector2d zl =
      (Eigen::Matrix2d::Identity() + dyn.A).inverse() * dyn.B * orbit.l_star[1];
  EXPECT_LT((zl - orbit.z_star[0].vec()).norm(), 1e-12);
  Eigen::Vector2d z = orbit.z_star[0].vec();
  for (int k = 0; k < 15; ++k) {
    z = dyn.step(z, orbit.l(k));
    ASSERT_LT((z - orbit.z(k + 1).vec()).norm(), 1e-9) << "step " << k;
  }
}

TEST(Period2, NetDrift) {
  const OrbitSpec orbit = period2_orbit(0.05, 0.2, kParams);
  EXPECT_NEAR(orbit.l_star[0] + orbit.l_star[1], 2.0 * 0.05 * kParams.step_period(), 1e-15);
  EXPECT_LT(orbit_residual(kParams, orbit), 1e-9);
  EXPECT_THROW(period2_orbit(0.0, 0.0, kParams), InvalidArgument);
}

TEST(Deadbeat, ZeroDriftNeedsNoFeedback) {
  S2SDynamics dyn;
  dyn.A.setZero();
  dyn.B << -1.0, 0.3;
  const FeedbackGain g = deadbeat_gain(dyn);
  EXPECT_EQ(g.K(0), 0.0);
  EXPECT_EQ(g.K(1), 0.0);
}

TEST(Deadbeat, NilpotentClosedLoop) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  const FeedbackGain g = deadbeat_gain(dyn);
  const Eigen::Matrix2d M = dyn.A + dyn.B * g.K;
  EXPECT_LT((M * M).cwiseAbs().maxCoeff(), 1e-9);
  // Frozen from the oracle flow matrix.
  EXPECT_NEAR(g.K(0), 1.0, 1e-9);
  EXPECT_NEAR(g.K(1), 0.4467509928989101, 1e-9);
  EXPECT_LT(spectral_radius(dyn, g), 1.0);
}

TEST(Deadbeat, UncontrollablePairRejected) {
  S2SDynamics dyn;
  dyn.A << 2.0, 0.0, 0.0, 0.5;
  dyn.B << 1.0, 0.0;  // second mode unreachable and nonzero
  EXPECT_THROW(deadbeat_gain(dyn), NoStabilizingGain);
}

TEST(Deadbeat, TwoStepConvergence) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  const FeedbackGain g = deadbeat_gain(dyn);
  const OrbitSpec orbit = period1_orbit(0.2, kParams);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-0.05, 0.05);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Vector2d z = orbit.z_star[0].vec() + Eigen::Vector2d(d(rng), 4.0 * d(rng));
    for (int k = 0; k < 2; ++k) z = dyn.step(z, step_controller(HlipState::from(z), orbit, g, k));
    EXPECT_LT((z - orbit.z_star[0].vec()).norm(), 1e-9);
  }
}

TEST(Deadbeat, ParameterSweep) {
  for (double d0 = 0.5; d0 <= 1.2001; d0 += 0.05) {
    for (double t = 0.2; t <= 0.5001; t += 0.025) {
      const S2SDynamics dyn = s2s_matrices(HlipParams(d0, t));
      const FeedbackGain g = deadbeat_gain(dyn);
      const Eigen::Matrix2d M = dyn.A + dyn.B * g.K;
      EXPECT_LT((M * M).cwiseAbs().maxCoeff(), 1e-9) << d0 << " " << t;
    }
  }
}

TEST(PlaceGain, SpectralRadiusBelowOne) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  for (auto [a, b] : {std::pair{0.5, 0.2}, {-0.3, 0.3}, {0.9, 0.0}}) {
    const FeedbackGain g = place_gain(dyn, a, b);
    EXPECT_NEAR(spectral_radius(dyn, g), std::max(std::abs(a), std::abs(b)), 1e-7);
  }
  EXPECT_THROW(place_gain(dyn, 1.2, 0.0), NoStabilizingGain);
}

TEST(StepController, ZeroErrorReturnsNominal) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  const FeedbackGain g = deadbeat_gain(dyn);
  const OrbitSpec orbit = period1_orbit(0.2, kParams);
  EXPECT_EQ(step_controller(orbit.z_star[0], orbit, g, 0), orbit.l_star[0]);
  const HlipState shifted{orbit.z_star[0].p + 0.01, orbit.z_star[0].v};
  EXPECT_NEAR(step_controller(shifted, orbit, g, 5), orbit.l_star[0] + g.K(0) * 0.01, 1e-15);
}

TEST(StepController, ErrorRecursion) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  const FeedbackGain g = place_gain(dyn, 0.4, -0.2);
  const OrbitSpec orbit = period1_orbit(0.3, kParams);
  const Eigen::Matrix2d M = dyn.A + dyn.B * g.K;
  Eigen::Vector2d z = orbit.z_star[0].vec() + Eigen::Vector2d(0.02, -0.05);
  Eigen::Vector2d e = z - orbit.z_star[0].vec();
  for (int k = 0; k < 10; ++k) {
    z = dyn.step(z, step_controller(HlipState::from(z), orbit, g, k));
    e = M * e;
    EXPECT_LT((z - orbit.z_star[0].vec() - e).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(StepController, Period2PhaseSelection) {
  const OrbitSpec orbit = period2_orbit(0.0, 0.2, kParams);
  const FeedbackGain g = deadbeat_gain(s2s_matrices(kParams));
  EXPECT_EQ(step_controller(orbit.z_star[0], orbit, g, 0), orbit.l_star[0]);
  EXPECT_EQ(step_controller(orbit.z_star[1], orbit, g, 1), orbit.l_star[1]);
  EXPECT_EQ(step_controller(orbit.z_star[1], orbit, g, -1), orbit.l_star[1]);
}

TEST(Disturbance, IssBound) {
  const S2SDynamics dyn = s2s_matrices(kParams);
  const FeedbackGain g = deadbeat_gain(dyn);
  const Eigen::Matrix2d M = dyn.A + dyn.B * g.K;
  const double eps = 0.01;
  // sup |e_k|_inf <= eps * sum_j |M^j|_inf
  double bound = 0.0;
  Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
  for (int j = 0; j < 60; ++j) {
    bound += P.cwiseAbs().rowwise().sum().maxCoeff();
    P = M * P;
  }
  bound *= eps;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> w(-eps, eps);
  Eigen::Vector2d e = Eigen::Vector2d::Zero();
  double sup = 0.0;
  for (int k = 0; k < 10000; ++k) {
    e = M * e + Eigen::Vector2d(w(rng), w(rng));
    sup = std::max(sup, e.cwiseAbs().maxCoeff());
  }
  EXPECT_LE(sup, bound);
}

}  // namespace
}  // namespace hzdhlip
