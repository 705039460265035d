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

// Slow gait-solver measurements: collocation refinement and warm starts.

#include <gtest/gtest.h>

#include <iostream>

#include "hzdhlip/gaitgen.hpp"
#include "hzdhlip/io.hpp"

namespace hzdhlip {
namespace {

const RobotModel kModel = RobotModel::desk_default();

const GaitLibrary& library() {
  static const GaitLibrary lib = io::load_library(HZDHLIP_CONFIG_DIR "/gaits_desk.json", kModel);
  return lib;
}

GaitSolveOptions lenient() {
  GaitSolveOptions o;
  o.throw_on_failure = false;
  return o;
}

TEST(Refinement, DoublingTheIntervalsKeepsThePreimpactComState) {
  const Gait& coarse = library().nearest(0.2);
  ASSERT_EQ(coarse.nodes(), 13);
  GaitRequest r;
  r.v_des = 0.2;
  r.nodes = 2 * coarse.nodes() - 1;
  const GaitTranscription tr(kModel, r);
  // Start from the coarse solution with midpoints inserted.
  Eigen::MatrixXd traj(r.nodes, kNodeSize);
  for (int k = 0; k < r.nodes; ++k) {
    traj.row(k) = k % 2 == 0 ? coarse.trajectory.row(k / 2).eval()
                             : (0.5 * (coarse.trajectory.row(k / 2) + coarse.trajectory.row(k / 2 + 1))).eval();
  }
  const Gait fine = solve_gait(tr, tr.pack(traj, coarse.outputs.alpha(), coarse.impact), lenient());
  ASSERT_LT(fine.report.max_violation, 1e-6);
  std::cout << "pre-impact COM at N = 13: (" << coarse.z_hlip.p << ", " << coarse.z_hlip.v << "), N = 25: ("
            << fine.z_hlip.p << ", " << fine.z_hlip.v << ")\n";
  EXPECT_LT(std::abs(fine.z_hlip.p - coarse.z_hlip.p), 1e-3);
  EXPECT_LT(std::abs(fine.z_hlip.v - coarse.z_hlip.v), 1e-3);
}

TEST(WarmStart, IterationsAgainstColdStartAtQuarterMeterPerSecond) {
  GaitRequest r;
  r.v_des = 0.25;
  const GaitTranscription tr(kModel, r);
  const Gait warm = solve_gait(tr, warm_start(library(), tr), lenient());
  const Gait cold = solve_gait(tr, ramp_guess(tr), lenient());
  EXPECT_LT(warm.report.max_violation, 1e-6);
  EXPECT_LT(cold.report.max_violation, 1e-6);
  // Reported, not asserted.
  std::cout << "v = 0.25 warm start: " << warm.report.outer_iterations << " iterations, "
            << warm.report.solve_seconds << " s; cold start: " << cold.report.outer_iterations << " iterations, "
            << cold.report.solve_seconds << " s\n";
  RecordProperty("warm_iterations", warm.report.outer_iterations);
  RecordProperty("cold_iterations", cold.report.outer_iterations);
}

}  // namespace
}  // namespace hzdhlip
