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

// Dense sequential quadratic programming for NlpProblem, with a
// primal-dual interior-point QP solver.

#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hzdhlip/log.hpp"
#include "hzdhlip/nlp.hpp"

namespace hzdhlip::nlp {

/// min 1/2 d'Hd + g'd  s.t.  E d = e,  C d >= b,  lb <= d <= ub.
/// H must be positive definite. Infinite entries of lb/ub are ignored.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd E;
  Eigen::VectorXd e;
  Eigen::MatrixXd C;
  Eigen::VectorXd b;
  Eigen::VectorXd lb, ub;
};

/// Multipliers follow H d + g = E'y + C'z + zl - zu with z, zl, zu >= 0.
struct QpResult {
  Eigen::VectorXd d, y, z, zl, zu;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

struct QpOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
};

/// Mehrotra predictor-corrector interior-point method.
inline QpResult solve_qp(const QpProblem& qp, const QpOptions& opt = {}) {
  const int n = static_cast<int>(qp.g.size());
  const int me = static_cast<int>(qp.e.size());
  const int mi = static_cast<int>(qp.b.size());
  const Eigen::MatrixXd E = me ? qp.E : Eigen::MatrixXd(0, n);
  const Eigen::MatrixXd C = mi ? qp.C : Eigen::MatrixXd(0, n);
  std::vector<int> L, U;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(qp.lb(j))) L.push_back(j);
    if (std::isfinite(qp.ub(j))) U.push_back(j);
  }
  const int nl = static_cast<int>(L.size()), nu = static_cast<int>(U.size());
  const int ncomp = mi + nl + nu;

  QpResult res;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n), y = Eigen::VectorXd::Zero(me);
  for (int j = 0; j < n; ++j) {
    const double lo = qp.lb(j), hi = qp.ub(j);
    if (std::isfinite(lo) && std::isfinite(hi)) {
      d(j) = 0.5 * (lo + hi);
    } else if (std::isfinite(lo)) {
      d(j) = std::max(0.0, lo + 1.0);
    } else if (std::isfinite(hi)) {
      d(j) = std::min(0.0, hi - 1.0);
    }
  }
  Eigen::VectorXd sg = (C * d - qp.b).cwiseMax(1.0), zg = Eigen::VectorXd::Ones(mi);
  Eigen::VectorXd sl(nl), zl = Eigen::VectorXd::Ones(nl), su(nu), zu = Eigen::VectorXd::Ones(nu);
  for (int i = 0; i < nl; ++i) sl(i) = std::max(d(L[i]) - qp.lb(L[i]), 1e-2);
  for (int i = 0; i < nu; ++i) su(i) = std::max(qp.ub(U[i]) - d(U[i]), 1e-2);
  const double gscale = 1.0 + qp.g.cwiseAbs().maxCoeff();

  Eigen::VectorXd rd(n), re(me), rg(mi), rl(nl), ru(nu);
  const auto residuals = [&] {
    rd = qp.H * d + qp.g - E.transpose() * y - C.transpose() * zg;
    for (int i = 0; i < nl; ++i) rd(L[i]) -= zl(i);
    for (int i = 0; i < nu; ++i) rd(U[i]) += zu(i);
    re = E * d - qp.e;
    rg = C * d - qp.b - sg;
    for (int i = 0; i < nl; ++i) rl(i) = d(L[i]) - qp.lb(L[i]) - sl(i);
    for (int i = 0; i < nu; ++i) ru(i) = qp.ub(U[i]) - d(U[i]) - su(i);
  };
  const auto inf_norm = [](const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
  const auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i) {
      if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
    }
    return a;
  };

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    residuals();
    const double mu = ncomp ? (sg.dot(zg) + sl.dot(zl) + su.dot(zu)) / ncomp : 0.0;
    res.residual = std::max({inf_norm(rd) / gscale, inf_norm(re), inf_norm(rg), inf_norm(rl), inf_norm(ru)});
    if (!std::isfinite(res.residual) || !std::isfinite(mu)) break;
    if (res.residual <= opt.tolerance && mu <= opt.tolerance) {
      res.converged = true;
      break;
    }

    const Eigen::VectorXd wg = zg.cwiseQuotient(sg);
    Eigen::MatrixXd K = qp.H;
    K.noalias() += C.transpose() * wg.asDiagonal() * C;
    for (int i = 0; i < nl; ++i) K(L[i], L[i]) += zl(i) / sl(i);
    for (int i = 0; i < nu; ++i) K(U[i], U[i]) += zu(i) / su(i);
    // Full KKT matrix [K E'; E 0], LU with one step of iterative refinement.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + me, n + me);
    M.topLeftCorner(n, n) = K;
    M.topRightCorner(n, me) = E.transpose();
    M.bottomLeftCorner(me, n) = E;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    const auto kkt_solve = [&](const Eigen::VectorXd& rhs) {
      Eigen::VectorXd sol = lu.solve(rhs);
      sol += lu.solve(rhs - M * sol);
      return sol;
    };

    struct Dir {
      Eigen::VectorXd d, y, sg, zg, sl, zl, su, zu;
    };
    const auto direction = [&](const Eigen::VectorXd& cg, const Eigen::VectorXd& cl,
                               const Eigen::VectorXd& cu) {
      Dir v;
      Eigen::VectorXd r1 = -rd + C.transpose() * (cg - zg.cwiseProduct(rg)).cwiseQuotient(sg);
      for (int i = 0; i < nl; ++i) r1(L[i]) += (cl(i) - zl(i) * rl(i)) / sl(i);
      for (int i = 0; i < nu; ++i) r1(U[i]) -= (cu(i) - zu(i) * ru(i)) / su(i);
      // K dd - E'dy = r1,  E dd = -re.
      Eigen::VectorXd rhs(n + me);
      rhs << r1, -re;
      const Eigen::VectorXd sol = kkt_solve(rhs);
      v.d = sol.head(n);
      v.y = -sol.tail(me);
      v.sg = C * v.d + rg;
      v.zg = (cg - zg.cwiseProduct(v.sg)).cwiseQuotient(sg);
      v.sl.resize(nl);
      v.su.resize(nu);
      for (int i = 0; i < nl; ++i) v.sl(i) = v.d(L[i]) + rl(i);
      for (int i = 0; i < nu; ++i) v.su(i) = ru(i) - v.d(U[i]);
      v.zl = (cl - zl.cwiseProduct(v.sl)).cwiseQuotient(sl);
      v.zu = (cu - zu.cwiseProduct(v.su)).cwiseQuotient(su);
      return v;
    };
    const auto step_len = [&](const Dir& v) {
      return std::min({max_step(sg, v.sg), max_step(zg, v.zg), max_step(sl, v.sl), max_step(zl, v.zl),
                       max_step(su, v.su), max_step(zu, v.zu)});
    };

    const Dir aff = direction(-sg.cwiseProduct(zg), -sl.cwiseProduct(zl), -su.cwiseProduct(zu));
    const double a_aff = step_len(aff);
    double sigma = 0.0;
    if (ncomp) {
      const double mu_aff = ((sg + a_aff * aff.sg).dot(zg + a_aff * aff.zg) +
                             (sl + a_aff * aff.sl).dot(zl + a_aff * aff.zl) +
                             (su + a_aff * aff.su).dot(zu + a_aff * aff.zu)) /
                            ncomp;
      sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
    }
    const Dir v = direction(
        ((-sg.cwiseProduct(zg) - aff.sg.cwiseProduct(aff.zg)).array() + sigma * mu).matrix(),
        ((-sl.cwiseProduct(zl) - aff.sl.cwiseProduct(aff.zl)).array() + sigma * mu).matrix(),
        ((-su.cwiseProduct(zu) - aff.su.cwiseProduct(aff.zu)).array() + sigma * mu).matrix());
    const double a = std::min(1.0, 0.995 * step_len(v));
    d += a * v.d;
    if (me) y += a * v.y;
    sg += a * v.sg;
    zg += a * v.zg;
    sl += a * v.sl;
    zl += a * v.zl;
    su += a * v.su;
    zu += a * v.zu;
  }
  res.d = d;
  res.y = y;
  res.z = zg;
  res.zl = Eigen::VectorXd::Zero(n);
  res.zu = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < nl; ++i) res.zl(L[i]) = zl(i);
  for (int i = 0; i < nu; ++i) res.zu(U[i]) = zu(i);
  return res;
}

struct SqpConfig {
  int max_iterations = 200;
  double feasibility_tolerance = 1e-8;
  double step_tolerance = 1e-9;       // relative to 1 + |x|_inf
  double hessian_damping = 1e-6;      // added to the initial Gauss-Newton cost Hessian
  double trust_radius = 1.0;          // box on the step, times the variable scale
  double unbounded_scale = 10.0;      // scale of variables without finite bounds
  double min_trust_radius = 1e-8;
  double min_regularization = 1e-8;   // Levenberg term mu / scale^2 on the QP Hessian
  double max_regularization = 1e6;
  double cost_scale = 1.0;
  int stall_iterations = 5;           // feasible iterations without merit progress
  int progress_window = 10;           // iterations over which the cost must keep improving
  double progress_tolerance = 1e-3;   // relative cost decrease that counts as progress
  QpOptions qp;
  bool verbose = false;
};

/// Line-search SQP on the l1 merit function f + nu * sum(violation). The
/// Lagrangian Hessian is a Powell-damped BFGS approximation started from the
/// Gauss-Newton cost Hessian plus a diagonal damping; the step is boxed to the variable bounds and a trust radius.
/// A second-order correction on the equality rows counters the Maratos
/// effect. When the linearization is inconsistent the iteration falls back to
/// a Gauss-Newton step on the violation.
class SqpSolver final : public NlpSolver {
 public:
  explicit SqpSolver(SqpConfig config = {}) : config_(config) {}

  const SqpConfig& config() const { return config_; }

  SolveReport solve(const NlpProblem& problem, Eigen::VectorXd& x) const override {
    if (x.size() != problem.num_variables()) {
      throw InvalidArgument("SqpSolver: initial guess has wrong size");
    }
    const Eigen::VectorXd x_initial = x;
    SolveReport rep;
    rep.initial_cost = problem.evaluate_cost(x);
    rep.initial_violation = problem.max_violation(x);

    const int n = problem.num_variables();
    const Eigen::VectorXd xl = problem.lower_bounds(), xu = problem.upper_bounds();
    const Eigen::VectorXd lo = problem.constraint_lower(), hi = problem.constraint_upper();
    const int m = problem.num_constraints();
    std::vector<int> eq, ilo, ihi;
    for (int i = 0; i < m; ++i) {
      if (lo(i) == hi(i)) {
        eq.push_back(i);
        continue;
      }
      if (std::isfinite(lo(i))) ilo.push_back(i);
      if (std::isfinite(hi(i))) ihi.push_back(i);
    }
    const double cs = config_.cost_scale;
    const auto viol = [&](const Eigen::VectorXd& c) {
      Eigen::VectorXd v = (lo - c).cwiseMax(c - hi).cwiseMax(0.0);
      for (int i = 0; i < m; ++i) {
        if (!std::isfinite(c(i))) v(i) = kInf;
      }
      return v;
    };
    const auto merit = [&](const Eigen::VectorXd& xt, double nu, double* f_out = nullptr,
                           double* v_out = nullptr) {
      const double f = cs * problem.evaluate_cost(xt);
      const Eigen::VectorXd v = viol(problem.evaluate_constraints(xt));
      if (f_out) *f_out = f;
      if (v_out) *v_out = m ? v.maxCoeff() : 0.0;
      return f + nu * v.sum();
    };

    // Per-variable step scale: half the bound range, or a default.
    Eigen::VectorXd scale(n);
    for (int j = 0; j < n; ++j) {
      const double half = 0.5 * (xu(j) - xl(j));
      scale(j) = std::isfinite(half) && half > 0.0 ? half : config_.unbounded_scale;
    }
    x = problem.clamp(x);
    double nu = 1.0, radius = config_.trust_radius, mu = config_.min_regularization;
    bool qp_failed_last = false;
    std::vector<double> feasible_costs;  // cost history while feasible
    Eigen::MatrixXd B;  // quasi-Newton Lagrangian Hessian
    // Lagrangian gradient g - J' lambda for constraint multipliers lambda.
    const auto lagrangian_gradient = [&](const Eigen::VectorXd& xt, const Eigen::VectorXd& lambda) {
      Eigen::MatrixXd Jt, Jrt;
      const Eigen::VectorXd rt = problem.cost_residuals(xt, &Jrt);
      Eigen::VectorXd gl = 2.0 * cs * Jrt.transpose() * rt;
      if (m) gl -= problem.constraint_jacobian(xt).transpose() * lambda;
      return gl;
    };
    int stall = 0;
    for (int it = 1; it <= config_.max_iterations; ++it) {
      rep.outer_iterations = it;
      const Eigen::VectorXd c = problem.evaluate_constraints(x);
      const Eigen::MatrixXd J = problem.constraint_jacobian(x);
      Eigen::MatrixXd Jr;
      const Eigen::VectorXd r = problem.cost_residuals(x, &Jr);
      const Eigen::VectorXd v = viol(c);
      const double vmax = m ? v.maxCoeff() : 0.0;
      if (!std::isfinite(vmax) || !r.allFinite() || !J.allFinite()) {
        log::warn("SqpSolver: non-finite constraint or cost at the current iterate");
        break;
      }

      QpProblem qp;
      if (B.size() == 0) {
        B = 2.0 * cs * Jr.transpose() * Jr;
        B.diagonal().array() += config_.hessian_damping;
      }
      qp.H = B;
      qp.H.diagonal() += mu * scale.cwiseAbs2().cwiseInverse();
      qp.g = 2.0 * cs * Jr.transpose() * r;
      qp.E.resize(eq.size(), n);
      qp.e.resize(eq.size());
      for (std::size_t k = 0; k < eq.size(); ++k) {
        qp.E.row(k) = J.row(eq[k]);
        qp.e(k) = lo(eq[k]) - c(eq[k]);
      }
      qp.C.resize(ilo.size() + ihi.size(), n);
      qp.b.resize(ilo.size() + ihi.size());
      for (std::size_t k = 0; k < ilo.size(); ++k) {
        qp.C.row(k) = J.row(ilo[k]);
        qp.b(k) = lo(ilo[k]) - c(ilo[k]);
      }
      for (std::size_t k = 0; k < ihi.size(); ++k) {
        qp.C.row(ilo.size() + k) = -J.row(ihi[k]);
        qp.b(ilo.size() + k) = c(ihi[k]) - hi(ihi[k]);
      }
      qp.lb = (xl - x).cwiseMax(-radius * scale);
      qp.ub = (xu - x).cwiseMin(radius * scale);
      const QpResult sol = solve_qp(qp, config_.qp);
      rep.inner_iterations += sol.iterations;

      if (!sol.converged || !sol.d.allFinite()) {
        // First retry from the Gauss-Newton Hessian, then restore feasibility.
        if (!qp_failed_last) {
          if (config_.verbose) log::info("SqpSolver: QP failed, resetting the Hessian");
          B.resize(0, 0);
          mu = std::min(10.0 * mu, config_.max_regularization);
          qp_failed_last = true;
          continue;
        }
        qp_failed_last = false;
        if (config_.verbose) log::info("SqpSolver: inconsistent linearization, restoration step");
        if (!restoration_step(problem, x, c, J, radius * scale)) {
          radius *= 0.25;
          if (radius < config_.min_trust_radius) break;
        }
        continue;
      }
      qp_failed_last = false;
      const Eigen::VectorXd& d = sol.d;
      double lam = 0.0;
      if (sol.y.size()) lam = std::max(lam, sol.y.cwiseAbs().maxCoeff());
      if (sol.z.size()) lam = std::max(lam, sol.z.cwiseAbs().maxCoeff());
      nu = std::max(nu, 1.1 * lam);
      const double f0 = cs * r.squaredNorm();
      const double phi0 = f0 + nu * v.sum();
      const double slope = qp.g.dot(d) - nu * v.sum();

      const double dnorm = d.cwiseAbs().maxCoeff();
      if (vmax <= config_.feasibility_tolerance &&
          dnorm <= config_.step_tolerance * (1.0 + x.cwiseAbs().maxCoeff())) {
        rep.converged = true;
        break;
      }

      double alpha = 1.0;
      bool accepted = false, tried_soc = false;
      Eigen::VectorXd x_new;
      double phi_new = phi0;
      while (alpha >= 1e-10) {
        x_new = problem.clamp(x + alpha * d);
        phi_new = merit(x_new, nu);
        if (std::isfinite(phi_new) && phi_new <= phi0 + 1e-4 * alpha * std::min(slope, 0.0)) {
          accepted = true;
          break;
        }
        if (alpha == 1.0 && !tried_soc && !eq.empty()) {
          tried_soc = true;
          const Eigen::VectorXd ct = problem.evaluate_constraints(x_new);
          Eigen::VectorXd h(eq.size());
          for (std::size_t k = 0; k < eq.size(); ++k) h(k) = ct(eq[k]) - lo(eq[k]);
          Eigen::MatrixXd EEt = qp.E * qp.E.transpose();
          EEt.diagonal().array() += 1e-12 * (1.0 + EEt.diagonal().maxCoeff());
          const Eigen::VectorXd dc = -qp.E.transpose() * EEt.ldlt().solve(h);
          if (dc.allFinite()) {
            const Eigen::VectorXd x_soc = problem.clamp(x + d + dc);
            const double phi_soc = merit(x_soc, nu);
            if (std::isfinite(phi_soc) && phi_soc <= phi0 + 1e-4 * std::min(slope, 0.0)) {
              x_new = x_soc;
              phi_new = phi_soc;
              accepted = true;
              break;
            }
          }
        }
        alpha *= 0.5;
      }
      if (config_.verbose) {
        std::ostringstream os;
        os << "SQP " << it << ": f " << f0 << ", violation " << vmax << ", |d| " << dnorm << ", alpha "
           << (accepted ? alpha : 0.0) << ", nu " << nu << ", mu " << mu << ", qp "
           << sol.iterations << (tried_soc ? " soc" : "");
        log::info(os.str());
      }
      if (!accepted) {
        radius *= 0.25;
        if (radius < config_.min_trust_radius) break;
        continue;
      }
      if (alpha == 1.0) {
        radius = std::min(2.0 * radius, config_.trust_radius);
        mu = std::max(mu / 4.0, config_.min_regularization);
      } else {
        mu = std::min(10.0 * mu, config_.max_regularization);
      }
      const double rel_change = std::abs(phi0 - phi_new) / (1.0 + std::abs(phi0));
      // Powell-damped BFGS update with the new multipliers.
      Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
      for (std::size_t k = 0; k < eq.size(); ++k) lambda(eq[k]) = sol.y(k);
      for (std::size_t k = 0; k < ilo.size(); ++k) lambda(ilo[k]) += sol.z(k);
      for (std::size_t k = 0; k < ihi.size(); ++k) lambda(ihi[k]) -= sol.z(ilo.size() + k);
      const Eigen::VectorXd step = x_new - x;
      const Eigen::VectorXd yk = lagrangian_gradient(x_new, lambda) - lagrangian_gradient(x, lambda);
      const Eigen::VectorXd Bs = B * step;
      const double sBs = step.dot(Bs);
      if (sBs > 0.0 && yk.allFinite()) {
        const double sy = step.dot(yk);
        const double theta = sy >= 0.2 * sBs ? 1.0 : 0.8 * sBs / (sBs - sy);
        const Eigen::VectorXd yd = theta * yk + (1.0 - theta) * Bs;
        B += yd * yd.transpose() / step.dot(yd) - Bs * Bs.transpose() / sBs;
      }
      x = x_new;
      rep.final_merit = phi_new;
      const bool feasible = problem.max_violation(x) <= config_.feasibility_tolerance;
      if (feasible) {
        feasible_costs.push_back(problem.evaluate_cost(x));
        const std::size_t w = static_cast<std::size_t>(config_.progress_window);
        if (w > 0 && feasible_costs.size() > w) {
          const double before = feasible_costs[feasible_costs.size() - 1 - w];
          if (before - feasible_costs.back() <= config_.progress_tolerance * std::abs(before)) {
            rep.converged = true;
            break;
          }
        }
      } else {
        feasible_costs.clear();
      }
      if (feasible && rel_change < 1e-12) {
        if (++stall >= config_.stall_iterations) {
          rep.converged = true;
          break;
        }
      } else {
        stall = 0;
      }
    }

    rep.final_cost = problem.evaluate_cost(x);
    rep.max_violation = problem.max_violation(x);
    rep.worst_constraint = problem.worst_constraint(x);
    rep.penalty = nu;
    if (rep.max_violation > config_.feasibility_tolerance) rep.converged = false;
    if (rep.initial_violation <= config_.feasibility_tolerance &&
        (!rep.converged || rep.final_cost > rep.initial_cost)) {
      x = x_initial;
      rep.converged = true;
      rep.final_cost = rep.initial_cost;
      rep.max_violation = rep.initial_violation;
      rep.worst_constraint = problem.worst_constraint(x);
    }
    return rep;
  }

 private:
  /// Damped Gauss-Newton step on the violated rows; returns false if the
  /// total violation could not be reduced.
  bool restoration_step(const NlpProblem& problem, Eigen::VectorXd& x, const Eigen::VectorXd& c,
                        const Eigen::MatrixXd& J, const Eigen::VectorXd& radius) const {
    const Eigen::VectorXd lo = problem.constraint_lower(), hi = problem.constraint_upper();
    const int m = problem.num_constraints();
    std::vector<int> rows;
    Eigen::VectorXd s(m);
    for (int i = 0; i < m; ++i) {
      if (c(i) > hi(i)) {
        s(rows.size()) = c(i) - hi(i);
        rows.push_back(i);
      } else if (c(i) < lo(i)) {
        s(rows.size()) = c(i) - lo(i);
        rows.push_back(i);
      }
    }
    if (rows.empty()) return false;
    Eigen::MatrixXd Jv(rows.size(), J.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) Jv.row(k) = J.row(rows[k]);
    const Eigen::VectorXd sv = s.head(rows.size());
    const double v0 = problem.violations(x).sum();
    const Eigen::MatrixXd JtJ = Jv.transpose() * Jv;
    for (double mu = 1e-8 * (1.0 + JtJ.diagonal().maxCoeff()); mu < 1e12; mu *= 10.0) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal().array() += mu;
      Eigen::VectorXd d = -A.ldlt().solve(Jv.transpose() * sv);
      const double dn = d.cwiseAbs().cwiseQuotient(radius).maxCoeff();
      if (dn > 1.0) d /= dn;
      const Eigen::VectorXd xt = problem.clamp(x + d);
      const double vt = problem.violations(xt).sum();
      if (std::isfinite(vt) && vt < v0) {
        x = xt;
        return true;
      }
    }
    return false;
  }

  SqpConfig config_;
};

}  // namespace hzdhlip::nlp
