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

// Solved periodic gaits and speed-indexed gait libraries.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hzdhlip/bezier.hpp"
#include "hzdhlip/dynamics.hpp"
#include "hzdhlip/errors.hpp"
#include "hzdhlip/hlip.hpp"

namespace hzdhlip {

struct GaitResidualReport {
  bool converged = false;
  double max_violation = 0.0;
  std::string worst_constraint;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double solve_seconds = 0.0;
  double impact_output_error = 0.0;    // |y(0+)| after applying the reset to node N-1
  double impact_velocity_error = 0.0;  // |dy(0+)|
};

struct Gait {
  double v_des = 0.0;
  double t_ssp = 0.25;
  double com_height = 0.5;
  OutputSet outputs;
  HlipState z_hlip;  // pre-impact COM (x, vx) of the trajectory
  double l_nominal = 0.0;
  double cost = 0.0;
  GaitResidualReport report;
  Eigen::MatrixXd trajectory;  // nodes x (q, dq, u)
  Eigen::Vector4d impact = Eigen::Vector4d::Zero();

  int nodes() const { return static_cast<int>(trajectory.rows()); }

  HybridState node_state(int k) const {
    HybridState s;
    s.q = trajectory.row(k).head<5>().transpose();
    s.dq = trajectory.row(k).segment<5>(5).transpose();
    s.t_phase = t_ssp * k / (nodes() - 1);
    return s;
  }
  HybridState initial_state() const { return node_state(0); }
  HybridState preimpact_state() const { return node_state(nodes() - 1); }
  Vec4 torque(int k) const { return trajectory.row(k).tail<4>().transpose(); }
};

struct GaitLibrary {
  double t_ssp = 0.25;
  int degree = kDefaultBezierDegree;
  std::string model_hash;
  std::vector<Gait> gaits;  // strictly increasing v_des

  bool empty() const { return gaits.empty(); }

  void validate() const {
    for (std::size_t i = 0; i < gaits.size(); ++i) {
      if (std::abs(gaits[i].t_ssp - t_ssp) > 1e-12) {
        throw InvalidArgument("GaitLibrary: all gaits must share the step period");
      }
      if (gaits[i].outputs.degree() != degree) {
        throw InvalidArgument("GaitLibrary: all gaits must share the Bezier degree");
      }
      if (i > 0 && !(gaits[i].v_des > gaits[i - 1].v_des)) {
        throw InvalidArgument("GaitLibrary: speeds must be strictly increasing");
      }
    }
  }

  /// Inserts keeping the speed order; replaces a gait of equal speed.
  void insert(Gait g) {
    auto it = std::lower_bound(gaits.begin(), gaits.end(), g.v_des,
                               [](const Gait& a, double v) { return a.v_des < v; });
    if (it != gaits.end() && it->v_des == g.v_des) {
      *it = std::move(g);
    } else {
      gaits.insert(it, std::move(g));
    }
  }

  const Gait& nearest(double v) const {
    if (gaits.empty()) throw InvalidArgument("GaitLibrary: empty library");
    const Gait* best = &gaits.front();
    for (const auto& g : gaits) {
      if (std::abs(g.v_des - v) < std::abs(best->v_des - v)) best = &g;
    }
    return *best;
  }
};

}  // namespace hzdhlip
