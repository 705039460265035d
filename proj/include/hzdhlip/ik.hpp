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

#include <Eigen/Dense>

#include "hzdhlip/dynamics.hpp"

namespace hzdhlip {

/// Task coordinates (COM x, COM z, torso pitch, swing foot x, swing foot z)
/// relative to the stance foot. Rows 1..4 are the controlled outputs.
struct TaskKinematics {
  Vec5 y;
  Mat5 J;
};

inline TaskKinematics task_kinematics(const BodyChains& chains, const Vec5& q) {
  const LinkTrig<double> t(q, Vec5::Zero());
  const auto com = com_kinematics_t<double>(chains, t);
  const auto o = output_kinematics_t<double>(chains, q, Vec5::Zero());
  TaskKinematics k;
  k.y << com.pos(0), o.y;
  k.J << com.J.row(0), o.J;
  return k;
}

struct IkOptions {
  double damping = 1e-3;
  double tolerance = 1e-10;
  int max_iterations = 50;
  double max_step = 0.3;  // rad per iteration
};

struct IkResult {
  Vec5 q = Vec5::Zero();
  bool converged = false;
  int iterations = 0;
  double error = 0.0;
};

/// Damped least squares on the task rows selected by `rows`, moving only the
/// coordinates selected by `cols`.
inline IkResult solve_ik(const BodyChains& chains, const Vec5& q_start, const Vec5& target,
                         const Eigen::Matrix<bool, 5, 1>& rows,
                         const Eigen::Matrix<bool, 5, 1>& cols, const IkOptions& opt = {}) {
  IkResult r;
  r.q = q_start;
  const int nr = static_cast<int>(rows.count()), nc = static_cast<int>(cols.count());
  Eigen::MatrixXd J(nr, nc);
  Eigen::VectorXd e(nr);
  for (r.iterations = 0; r.iterations <= opt.max_iterations; ++r.iterations) {
    const TaskKinematics k = task_kinematics(chains, r.q);
    for (int i = 0, a = 0; i < 5; ++i) {
      if (!rows(i)) continue;
      e(a) = target(i) - k.y(i);
      for (int j = 0, b = 0; j < 5; ++j) {
        if (cols(j)) J(a, b++) = k.J(i, j);
      }
      ++a;
    }
    r.error = e.cwiseAbs().maxCoeff();
    if (r.error < opt.tolerance) {
      r.converged = true;
      break;
    }
    if (r.iterations == opt.max_iterations) break;
    const Eigen::MatrixXd JJt =
        J * J.transpose() + opt.damping * opt.damping * Eigen::MatrixXd::Identity(nr, nr);
    Eigen::VectorXd step = J.transpose() * JJt.ldlt().solve(e);
    const double n = step.cwiseAbs().maxCoeff();
    if (n > opt.max_step) step *= opt.max_step / n;
    for (int j = 0, b = 0; j < 5; ++j) {
      if (cols(j)) r.q(j) += step(b++);
    }
  }
  return r;
}

}  // namespace hzdhlip
