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

#include "hzdhlip/bezier.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace hzdhlip {
namespace {

Eigen::VectorXd random_coeffs(std::mt19937& rng, int degree, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Eigen::VectorXd c(degree + 1);
  for (int i = 0; i <= degree; ++i) c(i) = d(rng);
  return c;
}

// Power-basis oracle: expand the Bernstein form with binomial coefficients.
double bernstein_direct(const Eigen::VectorXd& c, double t) {
  const int b = static_cast<int>(c.size()) - 1;
  double v = 0.0;
  for (int i = 0; i <= b; ++i) {
    double binom = 1.0;
    for (int k = 1; k <= i; ++k) binom = binom * (b - i + k) / k;
    v += c(i) * binom * std::pow(t, i) * std::pow(1.0 - t, b - i);
  }
  return v;
}

TEST(Bezier, ConstantCurve) {
  const BezierCurve c(Eigen::VectorXd::Constant(6, 0.7));
  for (double t : {0.0, 0.3, 0.5, 1.0}) {
    EXPECT_DOUBLE_EQ(c.eval(t), 0.7);
    EXPECT_DOUBLE_EQ(c.d1(t), 0.0);
    EXPECT_DOUBLE_EQ(c.d2(t), 0.0);
  }
}

TEST(Bezier, LinearMidpoint) {
  const BezierCurve c(Eigen::Vector2d(0.0, 1.0));
  EXPECT_DOUBLE_EQ(c.eval(0.5), 0.5);
  EXPECT_DOUBLE_EQ(c.d1(0.3), 1.0);
  EXPECT_DOUBLE_EQ(c.d2(0.3), 0.0);
}

TEST(Bezier, RejectsDegreeZero) {
  EXPECT_THROW(BezierCurve(Eigen::VectorXd::Constant(1, 1.0)), InvalidArgument);
}

TEST(Bezier, PartitionOfUnity) {
  for (int b = 1; b <= 8; ++b) {
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      ASSERT_LT(std::abs(bernstein_basis(b, t).sum() - 1.0), 1e-14);
    }
  }
}

TEST(Bezier, EvaluationMatchesPowerBasis) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd c = random_coeffs(rng, 5);
    const BezierCurve curve(c);
    for (double t : {0.0, 0.13, 0.5, 0.77, 1.0}) {
      EXPECT_NEAR(curve.eval(t), bernstein_direct(c, t), 1e-14);
      EXPECT_NEAR(bernstein_basis(5, t).dot(c), curve.eval(t), 1e-14);
    }
  }
}

TEST(Bezier, DerivativesMatchFiniteDifferences) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const BezierCurve c(random_coeffs(rng, 5));
    for (double t : {0.1, 0.35, 0.6, 0.9}) {
      const auto f = [&](double s) { return Eigen::VectorXd::Constant(1, c.eval(s)); };
      const auto g = [&](double s) { return Eigen::VectorXd::Constant(1, c.d1(s)); };
      EXPECT_LT(std::abs(c.d1(t) - oracle::central_diff(f, t, 1e-5)(0)), 1e-7);
      EXPECT_LT(std::abs(c.d2(t) - oracle::central_diff(g, t, 1e-5)(0)), 1e-7);
      EXPECT_NEAR(bernstein_basis_derivative(5, t, 1).dot(c.coeffs()), c.d1(t), 1e-12);
      EXPECT_NEAR(bernstein_basis_derivative(5, t, 2).dot(c.coeffs()), c.d2(t), 1e-11);
    }
  }
}

TEST(Bezier, EndpointIdentities) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd k = random_coeffs(rng, 5);
    const BezierCurve c(k);
    EXPECT_EQ(c.eval(0.0), k(0));
    EXPECT_EQ(c.eval(1.0), k(5));
    EXPECT_NEAR(c.d1(0.0), 5 * (k(1) - k(0)), 1e-14);
    EXPECT_NEAR(c.d1(1.0), 5 * (k(5) - k(4)), 1e-14);
    EXPECT_NEAR(c.d2(0.0), 20 * (k(2) - 2 * k(1) + k(0)), 1e-13);
  }
}

TEST(Phase, ClampedTimeBased) {
  EXPECT_DOUBLE_EQ(PhaseVar::at(0.1, 0.25).tau, 0.4);
  EXPECT_DOUBLE_EQ(PhaseVar::at(0.1, 0.25).rate, 4.0);
  EXPECT_EQ(PhaseVar::at(0.3, 0.25).tau, 1.0);
  EXPECT_EQ(PhaseVar::at(0.3, 0.25).rate, 0.0);
  EXPECT_EQ(PhaseVar::at(-0.1, 0.25).tau, 0.0);
  EXPECT_THROW(PhaseVar::at(0.1, 0.0), InvalidArgument);
}

TEST(OutputSet, AlphaRoundTripAndDegreeCheck) {
  std::mt19937 rng(4);
  Eigen::MatrixXd a(4, 6);
  for (int i = 0; i < 4; ++i) a.row(i) = random_coeffs(rng, 5).transpose();
  const OutputSet o = OutputSet::from_alpha(a);
  EXPECT_EQ(o.alpha(), a);
  EXPECT_EQ(o.eval(0.0), a.col(0));
  EXPECT_THROW(OutputSet({BezierCurve(Eigen::VectorXd::Zero(6)), BezierCurve(Eigen::VectorXd::Zero(4)),
                          BezierCurve(Eigen::VectorXd::Zero(6)), BezierCurve(Eigen::VectorXd::Zero(6))}),
               InvalidArgument);
}

TEST(VirtualConstraint, ZeroOnDesiredAndLinearInPerturbation) {
  const RobotModel model = RobotModel::desk_default();
  HybridState s;
  s.q << 0.1, 0.4, 0.2, -0.3, 0.5;
  s.dq << 0.3, -0.2, 0.1, 0.4, -0.5;
  s.t_phase = 0.1;
  const auto ya = output_kinematics(model, s);
  const PhaseVar ph = PhaseVar::at(s.t_phase, 0.25);
  // Build a desired set passing through the actual outputs with matching rate.
  Eigen::MatrixXd a(4, 6);
  for (int i = 0; i < 4; ++i) {
    const double slope = ya.dy(i) / ph.rate;
    for (int j = 0; j < 6; ++j) a(i, j) = ya.y(i) + slope * (j / 5.0 - ph.tau);
  }
  const OutputSet des = OutputSet::from_alpha(a);
  const VirtualConstraint vc = virtual_constraint(ya, des, ph);
  EXPECT_LT(vc.y.cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(vc.dy.cwiseAbs().maxCoeff(), 1e-13);
  Eigen::MatrixXd b = a;
  b.row(2).array() -= 0.01;
  const VirtualConstraint vp = virtual_constraint(ya, OutputSet::from_alpha(b), ph);
  EXPECT_NEAR(vp.y(2), 0.01, 1e-14);
  EXPECT_NEAR(vp.y(0), 0.0, 1e-14);
}

TEST(VirtualConstraint, DerivativeMatchesFdAlongTrajectory) {
  const RobotModel model = RobotModel::desk_default();
  std::mt19937 rng(5);
  Eigen::MatrixXd a(4, 6);
  for (int i = 0; i < 4; ++i) a.row(i) = random_coeffs(rng, 5, 0.3).transpose();
  const OutputSet des = OutputSet::from_alpha(a);
  const double T = 0.25;
  HybridState s0;
  s0.q << 0.1, 0.4, 0.2, -0.3, 0.5;
  s0.dq << 0.3, -0.2, 0.1, 0.4, -0.5;
  s0.t_phase = 0.08;
  // Integrate the passive dynamics and difference the residual along the path.
  const auto state_at = [&](double dt) {
    Eigen::Matrix<double, 10, 1> x;
    x << s0.q, s0.dq;
    const int n = 200;
    const double h = dt / n;
    const auto f = [&](const Eigen::Matrix<double, 10, 1>& z) {
      HybridState st;
      st.q = z.head<5>();
      st.dq = z.tail<5>();
      Eigen::Matrix<double, 10, 1> d;
      d << st.dq, forward_dynamics(model, st, Vec4::Zero());
      return d;
    };
    for (int i = 0; i < n; ++i) {
      const auto k1 = f(x), k2 = f(x + 0.5 * h * k1), k3 = f(x + 0.5 * h * k2), k4 = f(x + h * k3);
      x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    HybridState st = s0;
    st.q = x.head<5>();
    st.dq = x.tail<5>();
    st.t_phase += dt;
    return st;
  };
  const auto residual = [&](double dt) -> Eigen::VectorXd {
    const HybridState st = state_at(dt);
    return virtual_constraint(output_kinematics(model, st), des, PhaseVar::at(st.t_phase, T)).y;
  };
  // Central stencil around t_phase + e.
  const double e = 1e-5;
  const Eigen::VectorXd fd = (residual(2 * e) - residual(0.0)) / (2 * e);
  const VirtualConstraint vc = virtual_constraint(
      output_kinematics(model, state_at(e)), des, PhaseVar::at(s0.t_phase + e, T));
  EXPECT_LT((vc.dy - fd).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Normalize, SwingXEndpointsAndIdentityRamp) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const BezierCurve c(random_coeffs(rng, 5));
    const NormalizedCurve n = normalize_swf_x(c);
    EXPECT_EQ(n.eval(0.0), 0.0);
    EXPECT_EQ(n.eval(1.0), 1.0);
    // Normalizing the denormalized curve gives the same normalized curve.
    const NormalizedCurve again = normalize_swf_x(n.denormalize());
    EXPECT_LT((again.curve.coeffs() - n.curve.coeffs()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((n.denormalize().coeffs() - c.coeffs()).cwiseAbs().maxCoeff(), 1e-12);
  }
  const BezierCurve affine(Eigen::VectorXd::LinSpaced(6, -0.1, 0.1));
  const NormalizedCurve r = normalize_swf_x(affine);
  for (double t : {0.0, 0.2, 0.5, 0.9, 1.0}) EXPECT_NEAR(r.eval(t), t, 1e-15);
  EXPECT_LT((identity_ramp(5).curve.coeffs() - r.curve.coeffs()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Normalize, SwingXDegenerate) {
  Eigen::VectorXd k(6);
  k << 0.1, 0.3, -0.2, 0.0, 0.4, 0.1;
  EXPECT_THROW(normalize_swf_x(BezierCurve(k)), DegenerateCurve);
}

TEST(Normalize, SwingY) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd k = random_coeffs(rng, 5);
    if (std::abs(k(0)) < 1e-3) continue;
    const NormalizedCurve n = normalize_swf_y(BezierCurve(k));
    EXPECT_EQ(n.eval(0.0), 1.0);
    EXPECT_LT((n.denormalize().coeffs() - k).cwiseAbs().maxCoeff(), 1e-12);
    const NormalizedCurve again = normalize_swf_y(n.denormalize());
    EXPECT_LT((again.curve.coeffs() - n.curve.coeffs()).cwiseAbs().maxCoeff(), 1e-12);
  }
  const NormalizedCurve c = normalize_swf_y(BezierCurve(Eigen::VectorXd::Constant(6, -0.15)));
  for (double t : {0.0, 0.4, 1.0}) EXPECT_DOUBLE_EQ(c.eval(t), 1.0);
  EXPECT_THROW(normalize_swf_y(BezierCurve(Eigen::VectorXd::Zero(6))), DegenerateCurve);
}

}  // namespace
}  // namespace hzdhlip
