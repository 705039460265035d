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

#include <cmath>
#include <string>

#include "hzdhlip/errors.hpp"

namespace hzdhlip {

/// Planar rigid link. For leg links com_offset is measured from the upper
/// joint (hip for a thigh, knee for a shank) toward the foot; for the torso it
/// is measured upward from the hip.
struct LinkParams {
  double mass = 0.0;        // [kg]
  double length = 0.0;      // [m]
  double com_offset = 0.0;  // [m]
  double inertia = 0.0;     // about the link COM [kg m^2]

  bool operator==(const LinkParams&) const = default;
};

struct JointRange {
  double lower = 0.0;  // [rad]
  double upper = 0.0;  // [rad]

  bool operator==(const JointRange&) const = default;
};

/// Planar five-link point-foot biped: torso plus two (thigh, shank) legs.
///
/// The default parameters are a fictional desk-scale robot (15 kg, 0.95 m)
/// with 50% of the mass in the torso, 15% per thigh and 10% per shank.
struct RobotModel {
  LinkParams torso;
  LinkParams left_thigh;
  LinkParams right_thigh;
  LinkParams left_shank;
  LinkParams right_shank;
  double gravity = 9.81;      // [m/s^2]
  double hip_torque_limit = 0.0;   // [N m]
  double knee_torque_limit = 0.0;  // [N m]
  JointRange hip_range;
  JointRange knee_range;

  bool operator==(const RobotModel&) const = default;

  double total_mass() const {
    return torso.mass + left_thigh.mass + right_thigh.mass + left_shank.mass + right_shank.mass;
  }
  double leg_length() const { return left_thigh.length + left_shank.length; }

  /// Throws InvalidArgument unless masses, lengths and inertias are positive
  /// and both legs are identical.
  void validate() const {
    const auto check_link = [](const LinkParams& l, const char* name) {
      if (!(l.mass > 0.0) || !(l.length > 0.0) || !(l.inertia > 0.0) || !std::isfinite(l.mass) ||
          !std::isfinite(l.length) || !std::isfinite(l.inertia) || !std::isfinite(l.com_offset)) {
        throw InvalidArgument(std::string("RobotModel: link '") + name +
                              "' needs positive finite mass, length and inertia");
      }
    };
    check_link(torso, "torso");
    check_link(left_thigh, "left_thigh");
    check_link(right_thigh, "right_thigh");
    check_link(left_shank, "left_shank");
    check_link(right_shank, "right_shank");
    if (!(left_thigh == right_thigh) || !(left_shank == right_shank)) {
      throw InvalidArgument("RobotModel: left and right legs must be identical");
    }
    if (!(gravity > 0.0)) throw InvalidArgument("RobotModel: gravity must be positive");
    if (!(hip_torque_limit > 0.0) || !(knee_torque_limit > 0.0)) {
      throw InvalidArgument("RobotModel: torque limits must be positive");
    }
    if (!(hip_range.lower < hip_range.upper) || !(knee_range.lower < knee_range.upper)) {
      throw InvalidArgument("RobotModel: joint ranges must be non-empty");
    }
  }

  static RobotModel desk_default() {
    RobotModel m;
    m.torso = {7.5, 0.35, 0.15, 7.5 * 0.35 * 0.35 / 12.0};
    m.left_thigh = {2.25, 0.30, 0.12, 2.25 * 0.30 * 0.30 / 12.0};
    m.right_thigh = m.left_thigh;
    m.left_shank = {1.5, 0.30, 0.12, 1.5 * 0.30 * 0.30 / 12.0};
    m.right_shank = m.left_shank;
    m.gravity = 9.81;
    m.hip_torque_limit = 40.0;
    m.knee_torque_limit = 40.0;
    m.hip_range = {-1.6, 1.6};
    m.knee_range = {0.0, 2.4};
    m.validate();
    return m;
  }
};

}  // namespace hzdhlip
