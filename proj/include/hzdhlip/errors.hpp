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

#include <stdexcept>
#include <string>

namespace hzdhlip {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or malformed input documents.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An HLIP orbit whose cycle equations have no unique solution.
class NonCharacterizableOrbit : public Error {
 public:
  using Error::Error;
};

/// No feedback gain renders the closed loop nilpotent / places the poles.
class NoStabilizingGain : public Error {
 public:
  using Error::Error;
};

/// Bezier normalization with coincident endpoints.
class DegenerateCurve : public Error {
 public:
  using Error::Error;
};

/// Non-finite state or singular mass matrix during integration.
class IntegrationFault : public Error {
 public:
  using Error::Error;
};

/// Gait request rejected before transcription.
class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};

/// The optimizer stopped without reaching the feasibility tolerance.
class SolverFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace hzdhlip
