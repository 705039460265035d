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

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "hzdhlip/dynamics.hpp"
#include "hzdhlip/errors.hpp"

namespace hzdhlip {

inline constexpr int kDefaultBezierDegree = 5;

/// Bernstein basis B_{i,b}(tau), i = 0..b.
inline Eigen::VectorXd bernstein_basis(int degree, double tau) {
  Eigen::VectorXd B = Eigen::VectorXd::Zero(degree + 1);
  B(0) = 1.0;
  // Pascal-style build-up keeps every intermediate a convex combination.
  for (int j = 1; j <= degree; ++j) {
    double saved = 0.0;
    for (int i = 0; i < j; ++i) {
      const double tmp = B(i);
      B(i) = saved + (1.0 - tau) * tmp;
      saved = tau * tmp;
    }
    B(j) = saved;
  }
  return B;
}

/// Basis of the k-th phase derivative: d^k/dtau^k sum_i c_i B_i = basis . c.
inline Eigen::VectorXd bernstein_basis_derivative(int degree, double tau, int order) {
  if (order == 0) return bernstein_basis(degree, tau);
  if (order > degree) return Eigen::VectorXd::Zero(degree + 1);
  const Eigen::VectorXd lower = bernstein_basis_derivative(degree - 1, tau, order - 1);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(degree + 1);
  for (int i = 0; i < degree; ++i) {
    out(i) -= degree * lower(i);
    out(i + 1) += degree * lower(i);
  }
  return out;
}

class BezierCurve {
 public:
  BezierCurve() : coeffs_(Eigen::VectorXd::Zero(2)) {}
  explicit BezierCurve(Eigen::VectorXd coeffs) : coeffs_(std::move(coeffs)) {
    if (coeffs_.size() < 2) throw InvalidArgument("BezierCurve: degree must be at least 1");
    if (!coeffs_.allFinite()) throw InvalidArgument("BezierCurve: non-finite coefficient");
  }

  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }

  /// de Casteljau evaluation.
  double eval(double tau) const {
    Eigen::VectorXd w = coeffs_;
    for (int r = degree(); r > 0; --r) {
      for (int i = 0; i < r; ++i) w(i) = (1.0 - tau) * w(i) + tau * w(i + 1);
    }
    return w(0);
  }

  /// Hodograph: the derivative is a degree b-1 curve on b*(c_{i+1} - c_i).
  BezierCurve derivative() const {
    const int b = degree();
    if (b == 1) return BezierCurve(Eigen::VectorXd::Constant(2, coeffs_(1) - coeffs_(0)));
    Eigen::VectorXd d(b);
    for (int i = 0; i < b; ++i) d(i) = b * (coeffs_(i + 1) - coeffs_(i));
    return BezierCurve(std::move(d));
  }

  double d1(double tau) const { return derivative().eval(tau); }
  double d2(double tau) const {
    if (degree() < 2) return 0.0;
    return derivative().derivative().eval(tau);
  }

 private:
  Eigen::VectorXd coeffs_;
};

inline double bezier_eval(const BezierCurve& c, double tau) { return c.eval(tau); }
inline double bezier_d1(const BezierCurve& c, double tau) { return c.d1(tau); }
inline double bezier_d2(const BezierCurve& c, double tau) { return c.d2(tau); }

/// Time-based phase tau = clamp(t_phase / T_ssp, 0, 1).
struct PhaseVar {
  double tau = 0.0;
  double rate = 0.0;  // dtau/dt, zero once clamped

  static PhaseVar at(double t_phase, double t_ssp) {
    if (!(t_ssp > 0.0)) throw InvalidArgument("PhaseVar: T_ssp must be positive");
    PhaseVar p;
    const double raw = t_phase / t_ssp;
    p.tau = std::clamp(raw, 0.0, 1.0);
    p.rate = (raw >= 0.0 && raw <= 1.0) ? 1.0 / t_ssp : 0.0;
    return p;
  }
};

/// Desired outputs in the order of OutputKinematics: COM z, torso pitch,
/// swing foot x, swing foot z (the last two relative to the stance foot).
class OutputSet {
 public:
  enum Channel : int { kComZ = 0, kTorsoPitch, kSwingX, kSwingZ };
  static constexpr std::array<const char*, 4> kNames = {"com_z", "torso_pitch", "swf_x", "swf_z"};

  OutputSet() = default;
  explicit OutputSet(std::array<BezierCurve, 4> curves) : curves_(std::move(curves)) {
    for (const auto& c : curves_) {
      if (c.degree() != curves_[0].degree()) {
        throw InvalidArgument("OutputSet: all curves must share the same degree");
      }
    }
  }

  /// Rows are channels, columns Bezier coefficients.
  static OutputSet from_alpha(const Eigen::MatrixXd& alpha) {
    if (alpha.rows() != 4) throw InvalidArgument("OutputSet: alpha must have 4 rows");
    std::array<BezierCurve, 4> c;
    for (int i = 0; i < 4; ++i) c[i] = BezierCurve(alpha.row(i).transpose());
    return OutputSet(std::move(c));
  }

  Eigen::MatrixXd alpha() const {
    Eigen::MatrixXd a(4, degree() + 1);
    for (int i = 0; i < 4; ++i) a.row(i) = curves_[i].coeffs().transpose();
    return a;
  }

  int degree() const { return curves_[0].degree(); }
  const BezierCurve& curve(int channel) const { return curves_.at(channel); }
  const BezierCurve& com_z() const { return curves_[kComZ]; }
  const BezierCurve& torso_pitch() const { return curves_[kTorsoPitch]; }
  const BezierCurve& swf_x() const { return curves_[kSwingX]; }
  const BezierCurve& swf_z() const { return curves_[kSwingZ]; }

  Vec4 eval(double tau) const { return apply([&](const BezierCurve& c) { return c.eval(tau); }); }
  Vec4 d1(double tau) const { return apply([&](const BezierCurve& c) { return c.d1(tau); }); }
  Vec4 d2(double tau) const { return apply([&](const BezierCurve& c) { return c.d2(tau); }); }

 private:
  template <class F>
  Vec4 apply(F&& f) const {
    Vec4 v;
    for (int i = 0; i < 4; ++i) v(i) = f(curves_[i]);
    return v;
  }

  std::array<BezierCurve, 4> curves_;
};

struct VirtualConstraint {
  Vec4 y;   // actual minus desired
  Vec4 dy;  // time derivative
};

/// y = y_a - y_d(tau) and its time derivative with dtau/dt = 1/T_ssp.
inline VirtualConstraint virtual_constraint(const OutputKinematics<double>& actual,
                                            const OutputSet& desired, const PhaseVar& phase) {
  VirtualConstraint vc;
  vc.y = actual.y - desired.eval(phase.tau);
  vc.dy = actual.dy - desired.d1(phase.tau) * phase.rate;
  return vc;
}

/// Affinely normalized curve: value(tau) = (b(tau) - offset) / scale.
struct NormalizedCurve {
  BezierCurve curve;
  double offset = 0.0;
  double scale = 1.0;

  double eval(double tau) const { return curve.eval(tau); }
  double d1(double tau) const { return curve.d1(tau); }
  double d2(double tau) const { return curve.d2(tau); }

  BezierCurve denormalize() const {
    return BezierCurve((curve.coeffs().array() * scale + offset).matrix());
  }
};

inline NormalizedCurve affine_normalize(const BezierCurve& c, double offset, double scale) {
  NormalizedCurve n;
  n.offset = offset;
  n.scale = scale;
  n.curve = BezierCurve(((c.coeffs().array() - offset) / scale).matrix());
  return n;
}

/// Sagittal normalization: 0 at tau = 0, 1 at tau = 1.
inline NormalizedCurve normalize_swf_x(const BezierCurve& c) {
  const double b0 = c.coeffs()(0), b1 = c.coeffs()(c.degree());
  if (std::abs(b1 - b0) <= 1e-9) {
    throw DegenerateCurve("normalize_swf_x: zero-length nominal step (b(1) == b(0))");
  }
  NormalizedCurve n = affine_normalize(c, b0, b1 - b0);
  // Pin the endpoint identities exactly.
  Eigen::VectorXd k = n.curve.coeffs();
  k(0) = 0.0;
  k(k.size() - 1) = 1.0;
  n.curve = BezierCurve(std::move(k));
  return n;
}

/// Frontal normalization: 1 at tau = 0.
inline NormalizedCurve normalize_swf_y(const BezierCurve& c) {
  const double b0 = c.coeffs()(0);
  if (std::abs(b0) <= 1e-9) {
    throw DegenerateCurve("normalize_swf_y: curve must start at a non-zero lateral offset");
  }
  NormalizedCurve n = affine_normalize(c, 0.0, b0);
  Eigen::VectorXd k = n.curve.coeffs();
  k(0) = 1.0;
  n.curve = BezierCurve(std::move(k));
  return n;
}

/// Identity ramp b(tau) = tau of the given degree, used for in-place steps.
inline NormalizedCurve identity_ramp(int degree) {
  NormalizedCurve n;
  n.curve = BezierCurve(Eigen::VectorXd::LinSpaced(degree + 1, 0.0, 1.0));
  return n;
}

}  // namespace hzdhlip
