// Copyright 2026 The dmtraj Authors
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

// Peer extrapolation over the planning horizon and footprint inflation.

#pragma once

#include <cmath>
#include <vector>

#include "dmtraj/core.hpp"

namespace dmtraj {

enum class FootprintShape { kCircle, kSquare };

/// Rotation-invariant region occupied by a peer. `extent` is the radius of a
/// circle or the half side of an axis-aligned square.
struct FootprintRegion {
  FootprintShape shape = FootprintShape::kCircle;
  Vec2 center = Vec2::Zero();
  double extent = 0.0;

  static FootprintRegion circle(const Vec2& c, double r) { return {FootprintShape::kCircle, c, r}; }
  static FootprintRegion square(const Vec2& c, double h) { return {FootprintShape::kSquare, c, h}; }

  bool contains(const Vec2& p, double tol = 0.0) const {
    if (shape == FootprintShape::kCircle) return (p - center).norm() <= extent + tol;
    return (p - center).cwiseAbs().maxCoeff() <= extent + tol;
  }
};

struct PredictionSample {
  double time = 0.0;
  FootprintRegion region;
};

struct PeerPrediction {
  int robot_id = 0;
  bool stale = false;
  std::vector<PredictionSample> samples;
};

/// Constant-acceleration extrapolation P + v dt + a dt^2. With `half_accel`
/// the acceleration term is a dt^2 / 2.
inline Vec2 predict_position(const RobotState& state, double t, bool half_accel = false) {
  const double dt = t - state.stamp;
  if (!std::isfinite(t) || dt < 0.0) {
    throw ValidationError("t: prediction time precedes the state stamp");
  }
  const double accel_gain = half_accel ? 0.5 : 1.0;
  return state.position + state.velocity * dt + accel_gain * state.acceleration * dt * dt;
}

inline FootprintRegion inflate_footprint(const Vec2& position, const SizeSpec& spec) {
  spec.validate();
  if (spec.is_box()) return FootprintRegion::square(position, std::sqrt(2.0) * spec.max_dim());
  return FootprintRegion::circle(position, spec.rotation_invariant_radius());
}

inline PeerPrediction predict_horizon(const RobotState& state, const PlannerConfig& cfg,
                                      double now) {
  if (now < state.stamp) throw ValidationError("now: precedes the state stamp");
  PeerPrediction out;
  out.robot_id = state.robot_id;
  out.stale = now - state.stamp > cfg.staleness_limit;
  const int steps = cfg.horizon_steps();
  out.samples.reserve(static_cast<std::size_t>(steps));
  for (int k = 1; k <= steps; ++k) {
    const double t = now + k * cfg.tau;
    out.samples.push_back({t, inflate_footprint(predict_position(state, t, cfg.half_accel),
                                                state.size)});
  }
  return out;
}

}  // namespace dmtraj
