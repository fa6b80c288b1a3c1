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

// Shared value types and planner configuration.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmtraj {

using Vec2 = Eigen::Vector2d;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised when a value violates a documented invariant. The message always
/// starts with the offending field name.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

inline bool all_finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

/// Declared body dimensions. One entry models a sphere, two a cylinder,
/// three a cuboid.
struct SizeSpec {
  std::vector<double> dims;

  void validate(const std::string& field = "size") const {
    if (dims.empty() || dims.size() > 3) {
      throw ValidationError(field + ": expected 1 to 3 dimensions, got " +
                            std::to_string(dims.size()));
    }
    for (double d : dims) {
      if (!(d > 0.0) || !std::isfinite(d)) {
        throw ValidationError(field + ": dimensions must be positive and finite");
      }
    }
  }

  double max_dim() const { return *std::max_element(dims.begin(), dims.end()); }

  bool is_box() const { return dims.size() == 3; }

  /// Radius of the smallest disc that contains the modeled footprint at any
  /// heading. Boxes are modeled as squares of half side sqrt(2) * max(dims).
  double rotation_invariant_radius() const {
    if (is_box()) return std::sqrt(2.0) * max_dim();
    return dims.size() == 1 ? dims[0] : max_dim();
  }
};

struct RobotState {
  int robot_id = 0;
  double stamp = 0.0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 acceleration = Vec2::Zero();
  SizeSpec size{{0.25}};

  void validate() const {
    if (!std::isfinite(stamp) || stamp < 0.0) {
      throw ValidationError("stamp: must be finite and non-negative");
    }
    if (!all_finite(position)) throw ValidationError("position: must be finite");
    if (!all_finite(velocity)) throw ValidationError("velocity: must be finite");
    if (!all_finite(acceleration)) throw ValidationError("acceleration: must be finite");
    size.validate();
  }
};

struct Waypoint {
  double stamp = 0.0;
  Vec2 position = Vec2::Zero();
};

struct DerivativeBound {
  double lower = -kInf;
  double upper = kInf;
};

struct PlannerConfig {
  double horizon = 3.0;          // t_h, seconds
  double tau = 0.1;              // prediction / region discretization, seconds
  double replan_period = 0.04;   // 25 Hz
  int deriv_order = 3;           // n; the cost penalizes derivatives n-1 and n
  int poly_degree = 5;           // 2n - 1

  double weight_lower_deriv = 1.0;  // Q_{n-1}
  double weight_deriv = 1.0;        // Q_n
  double weight_final = 100.0;
  double weight_obstacle = 10.0;

  double obstacle_threshold = 0.75;  // rho, clearance where the obstacle cost is ~1
  double smoothness = 10.0;          // K_p
  double min_obstacle_distance = 1e-3;
  double min_speed = 0.1;            // speed floor used to weight the obstacle cost

  /// Bounds for derivatives 1..n, applied per axis. Index 0 is velocity.
  std::vector<DerivativeBound> dyn_limits{{-1.0, 1.0}, {-1.5, 1.5}, {-6.0, 6.0}};
  int n_dyn_samples = 16;

  bool half_accel = false;        // use 1/2 a dt^2 in peer extrapolation
  double staleness_limit = 1.0;   // seconds
  double relax_factor = 1.5;      // dynamic-bound scaling in the second fallback step
  double safety_margin = 0.05;    // added to the ego radius when eroding safe regions
  double recovery_time = 1.0;     // seconds over which a violated half-plane is re-tightened
  double regularization = 1e-8;

  int horizon_steps() const { return static_cast<int>(std::lround(horizon / tau)); }
  int coeff_count() const { return poly_degree + 1; }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ValidationError(std::string(name) + ": must be positive and finite");
      }
    };
    auto non_negative = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ValidationError(std::string(name) + ": must be non-negative and finite");
      }
    };
    positive(horizon, "horizon");
    positive(tau, "tau");
    positive(replan_period, "replan_period");
    const double steps = horizon / tau;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
      throw ValidationError("tau: must divide horizon into an integer number of steps");
    }
    if (deriv_order < 1) throw ValidationError("deriv_order: must be at least 1");
    if (poly_degree != 2 * deriv_order - 1) {
      throw ValidationError("poly_degree: must equal 2 * deriv_order - 1");
    }
    non_negative(weight_lower_deriv, "weight_lower_deriv");
    non_negative(weight_deriv, "weight_deriv");
    non_negative(weight_final, "weight_final");
    non_negative(weight_obstacle, "weight_obstacle");
    non_negative(obstacle_threshold, "obstacle_threshold");
    positive(smoothness, "smoothness");
    positive(min_obstacle_distance, "min_obstacle_distance");
    non_negative(min_speed, "min_speed");
    if (static_cast<int>(dyn_limits.size()) != deriv_order) {
      throw ValidationError("dyn_limits: expected one bound per derivative 1..deriv_order");
    }
    for (std::size_t k = 0; k < dyn_limits.size(); ++k) {
      const auto& b = dyn_limits[k];
      if (std::isnan(b.lower) || std::isnan(b.upper) || b.lower > b.upper) {
        throw ValidationError("dyn_limits[" + std::to_string(k) +
                              "]: lower bound must not exceed upper bound");
      }
    }
    if (n_dyn_samples < 0) throw ValidationError("n_dyn_samples: must be non-negative");
    positive(staleness_limit, "staleness_limit");
    if (!(relax_factor >= 1.0)) throw ValidationError("relax_factor: must be at least 1");
    non_negative(safety_margin, "safety_margin");
    positive(recovery_time, "recovery_time");
    non_negative(regularization, "regularization");
  }
};

/// Defaults: 3 s horizon, 0.1 s discretization, 25 Hz replanning, 0.75 m
/// obstacle threshold and quintic (n = 3) polynomials.
inline PlannerConfig default_config() { return PlannerConfig{}; }

}  // namespace dmtraj
