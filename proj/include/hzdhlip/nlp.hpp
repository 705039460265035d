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

// Sparse nonlinear program in block form:
//
//   min  sum_k |r_k(x)|^2
//   s.t. lower_j <= c_j(x) <= upper_j,   x_lo <= x <= x_hi
//
// Residuals and constraints are ceres::CostFunction objects over subsets of
// the parameter blocks, so Jacobians come from ceres' automatic
// differentiation. AugmentedLagrangianSolver handles the constraints with
// multipliers and slacks and hands each bound-constrained subproblem to the
// ceres trust-region least-squares solver.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <ceres/ceres.h>
#include <Eigen/Dense>

#include "hzdhlip/errors.hpp"
#include "hzdhlip/log.hpp"

namespace hzdhlip::nlp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ParameterBlock {
  std::string name;
  int size = 0;
  int offset = 0;
  Eigen::VectorXd lower, upper;
};

struct ConstraintBlock {
  std::string name;
  std::vector<int> blocks;
  std::shared_ptr<ceres::CostFunction> fn;
  Eigen::VectorXd lower, upper;
  int offset = 0;

  int size() const { return fn->num_residuals(); }
  bool is_equality() const { return lower == upper; }
};

struct CostBlock {
  std::string name;
  std::vector<int> blocks;
  std::shared_ptr<ceres::CostFunction> fn;
};

class NlpProblem {
 public:
  int add_block(std::string name, int size, double lower = -kInf, double upper = kInf) {
    return add_block(std::move(name), Eigen::VectorXd::Constant(size, lower),
                     Eigen::VectorXd::Constant(size, upper));
  }

  int add_block(std::string name, Eigen::VectorXd lower, Eigen::VectorXd upper) {
    if (lower.size() != upper.size() || lower.size() == 0) {
      throw InvalidArgument("NlpProblem: bad bounds for block '" + name + "'");
    }
    ParameterBlock b;
    b.name = std::move(name);
    b.size = static_cast<int>(lower.size());
    b.offset = num_variables_;
    b.lower = std::move(lower);
    b.upper = std::move(upper);
    num_variables_ += b.size;
    blocks_.push_back(std::move(b));
    return static_cast<int>(blocks_.size()) - 1;
  }

  void add_constraint(std::string name, std::vector<int> blocks, ceres::CostFunction* fn,
                      Eigen::VectorXd lower, Eigen::VectorXd upper) {
    std::shared_ptr<ceres::CostFunction> owned(fn);
    check_signature(name, blocks, *fn);
    if (lower.size() != fn->num_residuals() || upper.size() != fn->num_residuals() ||
        (lower.array() > upper.array()).any()) {
      throw InvalidArgument("NlpProblem: bad interval for constraint '" + name + "'");
    }
    ConstraintBlock c;
    c.name = std::move(name);
    c.blocks = std::move(blocks);
    c.fn = std::move(owned);
    c.lower = std::move(lower);
    c.upper = std::move(upper);
    c.offset = num_constraints_;
    num_constraints_ += c.size();
    constraints_.push_back(std::move(c));
  }

  void add_equality(std::string name, std::vector<int> blocks, ceres::CostFunction* fn,
                    double target = 0.0) {
    const int m = fn->num_residuals();
    add_constraint(std::move(name), std::move(blocks), fn, Eigen::VectorXd::Constant(m, target),
                   Eigen::VectorXd::Constant(m, target));
  }

  void add_cost(std::string name, std::vector<int> blocks, ceres::CostFunction* fn) {
    std::shared_ptr<ceres::CostFunction> owned(fn);
    check_signature(name, blocks, *fn);
    costs_.push_back({std::move(name), std::move(blocks), std::move(owned)});
  }

  int num_variables() const { return num_variables_; }
  int num_constraints() const { return num_constraints_; }
  int num_equalities() const {
    int n = 0;
    for (const auto& c : constraints_) {
      for (int i = 0; i < c.size(); ++i) n += c.lower(i) == c.upper(i);
    }
    return n;
  }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }
  const std::vector<ConstraintBlock>& constraints() const { return constraints_; }
  const std::vector<CostBlock>& costs() const { return costs_; }

  Eigen::VectorXd lower_bounds() const { return stack([](const ParameterBlock& b) { return b.lower; }); }
  Eigen::VectorXd upper_bounds() const { return stack([](const ParameterBlock& b) { return b.upper; }); }

  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower_bounds()).cwiseMin(upper_bounds());
  }

  /// Evaluates fn at x. If J is non-null it receives the dense Jacobian with
  /// respect to the full decision vector.
  Eigen::VectorXd evaluate_function(const ceres::CostFunction& fn, const std::vector<int>& blocks,
                                    const Eigen::VectorXd& x, Eigen::MatrixXd* J = nullptr) const {
    const int m = fn.num_residuals();
    std::vector<const double*> params;
    for (int b : blocks) params.push_back(x.data() + blocks_[b].offset);
    Eigen::VectorXd r(m);
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> jac;
    std::vector<double*> jac_ptr;
    if (J) {
      for (int b : blocks) {
        jac.emplace_back(m, blocks_[b].size);
        jac_ptr.push_back(jac.back().data());
      }
    }
    if (!fn.Evaluate(params.data(), r.data(), J ? jac_ptr.data() : nullptr)) {
      r.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    if (J) {
      J->setZero(m, num_variables_);
      for (std::size_t k = 0; k < blocks.size(); ++k) {
        J->middleCols(blocks_[blocks[k]].offset, blocks_[blocks[k]].size) += jac[k];
      }
    }
    return r;
  }

  Eigen::VectorXd evaluate_constraints(const Eigen::VectorXd& x) const {
    Eigen::VectorXd c(num_constraints_);
    for (const auto& cb : constraints_) {
      c.segment(cb.offset, cb.size()) = evaluate_function(*cb.fn, cb.blocks, x);
    }
    return c;
  }

  Eigen::MatrixXd constraint_jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd J(num_constraints_, num_variables_);
    Eigen::MatrixXd Jb;
    for (const auto& cb : constraints_) {
      evaluate_function(*cb.fn, cb.blocks, x, &Jb);
      J.middleRows(cb.offset, cb.size()) = Jb;
    }
    return J;
  }

  /// Stacked cost residuals r (cost = |r|^2) and optionally their Jacobian.
  Eigen::VectorXd cost_residuals(const Eigen::VectorXd& x, Eigen::MatrixXd* J = nullptr) const {
    int m = 0;
    for (const auto& cb : costs_) m += cb.fn->num_residuals();
    Eigen::VectorXd r(m);
    if (J) J->setZero(m, num_variables_);
    Eigen::MatrixXd Jb;
    int row = 0;
    for (const auto& cb : costs_) {
      const int k = cb.fn->num_residuals();
      r.segment(row, k) = evaluate_function(*cb.fn, cb.blocks, x, J ? &Jb : nullptr);
      if (J) J->middleRows(row, k) = Jb;
      row += k;
    }
    return r;
  }

  double evaluate_cost(const Eigen::VectorXd& x) const {
    double f = 0.0;
    for (const auto& cb : costs_) f += evaluate_function(*cb.fn, cb.blocks, x).squaredNorm();
    return f;
  }

  Eigen::VectorXd constraint_lower() const {
    Eigen::VectorXd v(num_constraints_);
    for (const auto& c : constraints_) v.segment(c.offset, c.size()) = c.lower;
    return v;
  }
  Eigen::VectorXd constraint_upper() const {
    Eigen::VectorXd v(num_constraints_);
    for (const auto& c : constraints_) v.segment(c.offset, c.size()) = c.upper;
    return v;
  }

  /// Distance of every constraint value to its target interval.
  Eigen::VectorXd violations(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd c = evaluate_constraints(x);
    const Eigen::VectorXd lo = constraint_lower(), hi = constraint_upper();
    Eigen::VectorXd v = (lo - c).cwiseMax(c - hi).cwiseMax(0.0);
    for (int i = 0; i < v.size(); ++i) {
      if (!std::isfinite(c(i))) v(i) = kInf;
    }
    return v;
  }

  /// Distance of every variable to its bounds.
  Eigen::VectorXd bound_violations(const Eigen::VectorXd& x) const {
    return (lower_bounds() - x).cwiseMax(x - upper_bounds()).cwiseMax(0.0);
  }

  /// Largest constraint or bound violation.
  double max_violation(const Eigen::VectorXd& x) const {
    double v = num_variables_ ? bound_violations(x).maxCoeff() : 0.0;
    if (num_constraints_) v = std::max(v, violations(x).maxCoeff());
    return v;
  }

  /// Name and row of the most violated constraint or bound.
  std::string worst_constraint(const Eigen::VectorXd& x) const {
    std::ostringstream os;
    Eigen::Index row = 0, col = 0;
    const double vc = num_constraints_ ? violations(x).maxCoeff(&row) : -1.0;
    const double vb = num_variables_ ? bound_violations(x).maxCoeff(&col) : -1.0;
    if (vb > vc) {
      for (const auto& b : blocks_) {
        if (col >= b.offset && col < b.offset + b.size) {
          os << "bound " << b.name << "[" << col - b.offset << "] = " << vb;
        }
      }
      return os.str();
    }
    for (const auto& c : constraints_) {
      if (row >= c.offset && row < c.offset + c.size()) {
        os << c.name << "[" << row - c.offset << "] = " << vc;
      }
    }
    return os.str().empty() ? "none" : os.str();
  }

 private:
  template <class F>
  Eigen::VectorXd stack(F&& f) const {
    Eigen::VectorXd v(num_variables_);
    for (const auto& b : blocks_) v.segment(b.offset, b.size) = f(b);
    return v;
  }

  void check_signature(const std::string& name, const std::vector<int>& blocks,
                       const ceres::CostFunction& fn) const {
    const auto& sizes = fn.parameter_block_sizes();
    bool ok = sizes.size() == blocks.size();
    for (std::size_t i = 0; ok && i < blocks.size(); ++i) {
      ok = blocks[i] >= 0 && blocks[i] < static_cast<int>(blocks_.size()) &&
           sizes[i] == blocks_[blocks[i]].size;
    }
    if (!ok) throw InvalidArgument("NlpProblem: block signature mismatch for '" + name + "'");
  }

  std::vector<ParameterBlock> blocks_;
  std::vector<ConstraintBlock> constraints_;
  std::vector<CostBlock> costs_;
  int num_variables_ = 0;
  int num_constraints_ = 0;
};

struct SolverConfig {
  int max_outer_iterations = 40;
  int max_inner_iterations = 200;
  double feasibility_tolerance = 1e-8;
  double initial_penalty = 100.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e10;
  double cost_scale = 1.0;
  int dense_variable_limit = 2000;  // QR on the full Jacobian up to this size
  bool verbose = false;
};

struct SolveReport {
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double initial_violation = 0.0;
  double max_violation = 0.0;
  double final_merit = 0.0;
  double penalty = 0.0;
  std::string worst_constraint;

  std::string summary() const {
    std::ostringstream os;
    os << (converged ? "converged" : "NOT converged") << " after " << outer_iterations
       << " outer / " << inner_iterations << " inner iterations; cost " << final_cost
       << ", max violation " << max_violation << " (" << worst_constraint << ")";
    return os.str();
  }
};

class NlpSolver {
 public:
  virtual ~NlpSolver() = default;
  /// Improves x in place. Never throws on non-convergence; inspect the report.
  virtual SolveReport solve(const NlpProblem& problem, Eigen::VectorXd& x) const = 0;
};

namespace detail {

/// Identity map of one parameter block, used to express variable bounds.
class IdentityFunction final : public ceres::CostFunction {
 public:
  explicit IdentityFunction(int n) {
    set_num_residuals(n);
    mutable_parameter_block_sizes()->push_back(n);
  }
  bool Evaluate(double const* const* params, double* residuals, double** jacobians) const override {
    const int n = num_residuals();
    std::copy(params[0], params[0] + n, residuals);
    if (jacobians && jacobians[0]) {
      std::fill(jacobians[0], jacobians[0] + n * n, 0.0);
      for (int i = 0; i < n; ++i) jacobians[0][i * n + i] = 1.0;
    }
    return true;
  }
};

/// Multiplier state of one constraint block. Equality rows use `upper`
/// only; interval rows carry one non-negative multiplier per finite side.
struct AlRows {
  const ceres::CostFunction* fn = nullptr;
  std::vector<int> blocks;
  Eigen::VectorXd lo, hi;
  Eigen::VectorXd lambda_lo, lambda_hi;
  bool all_equal = false;
};

/// Powell-Hestenes-Rockafellar residuals of one constraint block:
///   equality:   sqrt(rho) (c - t + lambda / rho)
///   upper side: sqrt(rho) max(0, c - hi + lambda_hi / rho)
///   lower side: sqrt(rho) max(0, lo - c + lambda_lo / rho)
/// The sum of squares equals the augmented Lagrangian up to a constant.
class AlResidual final : public ceres::CostFunction {
 public:
  AlResidual(const AlRows* rows, const double* rho) : rows_(rows), rho_(rho) {
    const int m = rows->fn->num_residuals();
    set_num_residuals(rows->all_equal ? m : 2 * m);
    *mutable_parameter_block_sizes() = rows->fn->parameter_block_sizes();
  }

  bool Evaluate(double const* const* params, double* residuals, double** jacobians) const override {
    const auto& sizes = rows_->fn->parameter_block_sizes();
    const int m = rows_->fn->num_residuals();
    const int nb = static_cast<int>(sizes.size());
    Eigen::VectorXd c(m);
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> jac;
    std::vector<double*> jp(nb, nullptr);
    if (jacobians) {
      for (int k = 0; k < nb; ++k) {
        jac.emplace_back(m, sizes[k]);
        if (jacobians[k]) jp[k] = jac.back().data();
      }
    }
    if (!rows_->fn->Evaluate(params, c.data(), jacobians ? jp.data() : nullptr)) return false;
    const double rho = *rho_, sr = std::sqrt(rho);
    const int stride = rows_->all_equal ? 1 : 2;
    // Row i of the output gets scale * dc_i.
    const auto put = [&](int out, int i, double scale) {
      if (!jacobians) return;
      for (int k = 0; k < nb; ++k) {
        if (!jacobians[k]) continue;
        for (int j = 0; j < sizes[k]; ++j) jacobians[k][out * sizes[k] + j] = scale * jac[k](i, j);
      }
    };
    for (int i = 0; i < m; ++i) {
      const double lo = rows_->lo(i), hi = rows_->hi(i);
      const int o = stride * i;
      if (lo == hi) {
        residuals[o] = sr * (c(i) - hi + rows_->lambda_hi(i) / rho);
        put(o, i, sr);
        if (stride == 2) {
          residuals[o + 1] = 0.0;
          put(o + 1, i, 0.0);
        }
        continue;
      }
      const double a = std::isfinite(hi) ? c(i) - hi + rows_->lambda_hi(i) / rho : -1.0;
      const double b = std::isfinite(lo) ? lo - c(i) + rows_->lambda_lo(i) / rho : -1.0;
      residuals[o] = a > 0.0 ? sr * a : 0.0;
      put(o, i, a > 0.0 ? sr : 0.0);
      residuals[o + 1] = b > 0.0 ? sr * b : 0.0;
      put(o + 1, i, b > 0.0 ? -sr : 0.0);
    }
    return true;
  }

 private:
  const AlRows* rows_;
  const double* rho_;
};

/// scale * r(x), so that ceres' 0.5 |.|^2 equals the weighted problem cost.
class ScaledResidual final : public ceres::CostFunction {
 public:
  ScaledResidual(const ceres::CostFunction* inner, double scale) : inner_(inner), scale_(scale) {
    set_num_residuals(inner->num_residuals());
    *mutable_parameter_block_sizes() = inner->parameter_block_sizes();
  }

  bool Evaluate(double const* const* params, double* residuals, double** jacobians) const override {
    if (!inner_->Evaluate(params, residuals, jacobians)) return false;
    const int m = num_residuals();
    for (int i = 0; i < m; ++i) residuals[i] *= scale_;
    if (jacobians) {
      for (std::size_t k = 0; k < inner_->parameter_block_sizes().size(); ++k) {
        if (!jacobians[k]) continue;
        const int n = m * inner_->parameter_block_sizes()[k];
        for (int i = 0; i < n; ++i) jacobians[k][i] *= scale_;
      }
    }
    return true;
  }

 private:
  const ceres::CostFunction* inner_;
  double scale_;
};

}  // namespace detail

/// Augmented Lagrangian method (Powell-Hestenes-Rockafellar form). Each
/// subproblem
///
///   min  w f(x) + rho/2 sum |shifted constraint residual|^2
///
/// is an unconstrained nonlinear least-squares problem solved with ceres'
/// Levenberg-Marquardt (a damped Gauss-Newton method). Variable bounds are
/// treated like any other interval constraint. Multipliers follow the
/// first-order update; the penalty grows when the violation does not shrink
/// by a factor of four.
class AugmentedLagrangianSolver final : public NlpSolver {
 public:
  explicit AugmentedLagrangianSolver(SolverConfig config = {}) : config_(config) {}

  const SolverConfig& config() const { return config_; }

  SolveReport solve(const NlpProblem& problem, Eigen::VectorXd& x) const override {
    if (x.size() != problem.num_variables()) {
      throw InvalidArgument("AugmentedLagrangianSolver: initial guess has wrong size");
    }
    const Eigen::VectorXd x_initial = x;
    SolveReport rep;
    rep.initial_cost = problem.evaluate_cost(x);
    rep.initial_violation = problem.max_violation(x);

    std::vector<std::unique_ptr<ceres::CostFunction>> owned;
    std::vector<detail::AlRows> rows;
    rows.reserve(problem.constraints().size() + problem.blocks().size());
    const auto add_rows = [&](const ceres::CostFunction* fn, std::vector<int> blocks,
                              const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
      detail::AlRows r;
      r.fn = fn;
      r.blocks = std::move(blocks);
      r.lo = lo;
      r.hi = hi;
      r.lambda_lo = Eigen::VectorXd::Zero(lo.size());
      r.lambda_hi = Eigen::VectorXd::Zero(lo.size());
      r.all_equal = lo == hi;
      rows.push_back(std::move(r));
    };
    for (const auto& c : problem.constraints()) add_rows(c.fn.get(), c.blocks, c.lower, c.upper);
    for (int b = 0; b < static_cast<int>(problem.blocks().size()); ++b) {
      const auto& pb = problem.blocks()[b];
      if ((pb.lower.array() == -kInf).all() && (pb.upper.array() == kInf).all()) continue;
      owned.emplace_back(new detail::IdentityFunction(pb.size));
      add_rows(owned.back().get(), {b}, pb.lower, pb.upper);
    }

    double rho = config_.initial_penalty;
    ceres::Problem::Options popt;
    popt.cost_function_ownership = ceres::DO_NOT_TAKE_OWNERSHIP;
    ceres::Problem cp(popt);
    for (const auto& b : problem.blocks()) cp.AddParameterBlock(x.data() + b.offset, b.size);
    const auto ptrs = [&](const std::vector<int>& blocks) {
      std::vector<double*> p;
      for (int b : blocks) p.push_back(x.data() + problem.blocks()[b].offset);
      return p;
    };
    for (const auto& r : rows) {
      owned.emplace_back(new detail::AlResidual(&r, &rho));
      cp.AddResidualBlock(owned.back().get(), nullptr, ptrs(r.blocks));
    }
    const double cost_scale = std::sqrt(2.0 * config_.cost_scale);
    for (const auto& c : problem.costs()) {
      owned.emplace_back(new detail::ScaledResidual(c.fn.get(), cost_scale));
      cp.AddResidualBlock(owned.back().get(), nullptr, ptrs(c.blocks));
    }

    ceres::Solver::Options opt;
    opt.max_num_iterations = config_.max_inner_iterations;
    opt.function_tolerance = 1e-15;
    opt.gradient_tolerance = 1e-15;
    opt.parameter_tolerance = 1e-15;
    opt.logging_type = ceres::SILENT;
    opt.num_threads = 1;
    const bool sparse = problem.num_variables() > config_.dense_variable_limit &&
                        (ceres::IsSparseLinearAlgebraLibraryTypeAvailable(ceres::SUITE_SPARSE) ||
                         ceres::IsSparseLinearAlgebraLibraryTypeAvailable(ceres::EIGEN_SPARSE));
    opt.linear_solver_type = sparse ? ceres::SPARSE_NORMAL_CHOLESKY : ceres::DENSE_QR;

    double prev_violation = kInf;
    for (int outer = 1; outer <= config_.max_outer_iterations; ++outer) {
      ceres::Solver::Summary summary;
      ceres::Solve(opt, &cp, &summary);
      rep.outer_iterations = outer;
      rep.inner_iterations += static_cast<int>(summary.iterations.size());
      rep.final_merit = summary.final_cost;

      const double violation = problem.max_violation(x);
      if (config_.verbose) {
        std::ostringstream os;
        os << "AL outer " << outer << ": rho " << rho << ", violation " << violation << " ("
           << problem.worst_constraint(x) << "), cost " << problem.evaluate_cost(x) << ", inner "
           << summary.iterations.size() << " (" << summary.message << ")";
        log::info(os.str());
      }
      if (!std::isfinite(violation)) break;
      for (auto& r : rows) {
        const Eigen::VectorXd c = problem.evaluate_function(*r.fn, r.blocks, x);
        for (int i = 0; i < c.size(); ++i) {
          if (r.lo(i) == r.hi(i)) {
            r.lambda_hi(i) += rho * (c(i) - r.hi(i));
            continue;
          }
          if (std::isfinite(r.hi(i))) r.lambda_hi(i) = std::max(0.0, r.lambda_hi(i) + rho * (c(i) - r.hi(i)));
          if (std::isfinite(r.lo(i))) r.lambda_lo(i) = std::max(0.0, r.lambda_lo(i) + rho * (r.lo(i) - c(i)));
        }
      }
      if (violation <= config_.feasibility_tolerance &&
          summary.termination_type == ceres::CONVERGENCE) {
        rep.converged = true;
        break;
      }
      if (violation > 0.25 * prev_violation) {
        rho = std::min(rho * config_.penalty_growth, config_.max_penalty);
      }
      prev_violation = violation;
    }

    rep.final_cost = problem.evaluate_cost(x);
    rep.max_violation = problem.max_violation(x);
    rep.converged = rep.converged || rep.max_violation <= config_.feasibility_tolerance;
    rep.worst_constraint = problem.worst_constraint(x);
    rep.penalty = rho;
    // Acceptance rule: never trade a feasible starting point for a worse one.
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
  SolverConfig config_;
};

}  // namespace hzdhlip::nlp
