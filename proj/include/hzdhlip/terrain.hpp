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
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "hzdhlip/errors.hpp"

namespace hzdhlip {

/// Piecewise-linear ground height h(x). Constant extrapolation beyond the
/// first/last vertex; an empty profile is flat ground at zero height.
class TerrainProfile {
 public:
  TerrainProfile() = default;

  explicit TerrainProfile(std::vector<std::pair<double, double>> vertices)
      : vertices_(std::move(vertices)) {
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
      const auto [x, h] = vertices_[i];
      if (!std::isfinite(x) || !std::isfinite(h)) throw InvalidArgument("terrain: non-finite vertex");
      if (i > 0) {
        const double dx = x - vertices_[i - 1].first;
        if (!(dx > 0.0)) throw InvalidArgument("terrain: vertices must have increasing x");
        if (std::abs(h - vertices_[i - 1].second) > dx * (1.0 + 1e-12)) {
          throw InvalidArgument("terrain: slope magnitude must not exceed 1");
        }
      }
    }
  }

  static TerrainProfile flat() { return {}; }

  /// Flat segments of random height in [-amplitude, amplitude] that change over
  /// ramps of width `ramp` every `segment` metres, starting at x_start.
  static TerrainProfile random_steps(double amplitude, double segment, double ramp, double x_start,
                                     double x_end, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> height(-amplitude, amplitude);
    std::vector<std::pair<double, double>> v{{x_start, 0.0}};
    for (double x = x_start; x < x_end; x += segment) {
      const double next = height(rng);
      v.emplace_back(x + ramp, next);
      v.emplace_back(x + segment, next);
    }
    return TerrainProfile(std::move(v));
  }

  /// A single step of height `rise` located at x (ramp of width `ramp`).
  static TerrainProfile single_step(double x, double rise, double ramp) {
    return TerrainProfile({{x, 0.0}, {x + ramp, rise}});
  }

  double height(double x) const {
    if (vertices_.empty()) return 0.0;
    if (x <= vertices_.front().first) return vertices_.front().second;
    if (x >= vertices_.back().first) return vertices_.back().second;
    const auto it = std::upper_bound(vertices_.begin(), vertices_.end(), x,
                                     [](double v, const auto& p) { return v < p.first; });
    const auto& [x1, h1] = *it;
    const auto& [x0, h0] = *(it - 1);
    return h0 + (h1 - h0) * (x - x0) / (x1 - x0);
  }

  bool is_flat() const {
    return std::all_of(vertices_.begin(), vertices_.end(),
                       [](const auto& p) { return p.second == 0.0; });
  }

  const std::vector<std::pair<double, double>>& vertices() const { return vertices_; }

 private:
  std::vector<std::pair<double, double>> vertices_;
};

}  // namespace hzdhlip
