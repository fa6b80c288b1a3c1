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

// Receding-horizon trajectory optimization over one polynomial per axis.
//
// The decision vector stacks the x coefficients followed by the y
// coefficients, D = [a_x0 .. a_xN, a_y0 .. a_yN], with N = poly_degree.
// Polynomials are expressed in trajectory-relative time t - start_time.
//
// Cost terms follow the convention J(D) = D' H D + F' D. The solver works
// with 1/2 D' P D + q' D, so P = 2 H.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmtraj/core.hpp"
#include "dmtraj/perception.hpp"
#include "dmtraj/qpsolver.hpp"
#include "dmtraj/saferegion.hpp"

namespace dmtraj {

struct PolyTrajectory {
  double start_time = 0.0;
  double horizon = 0.0;
  int degree = 0;
  std::array<Eigen::VectorXd, 2> coeffs{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};

  bool covers(double t, double tol = 1e-9) const {
    return t >= start_time - tol && t <= start_time + horizon + tol;
  }

  Eigen::VectorXd decision() const {
    Eigen::VectorXd d(2 * (degree + 1));
    d << coeffs[0], coeffs[1];
    return d;
  }

  static PolyTrajectory from_decision(const Eigen::VectorXd& d, double start, double horizon,
                                      int degree) {
    const Eigen::Index n = degree + 1;
    PolyTrajectory t;
    t.start_time = start;
    t.horizon = horizon;
    t.degree = degree;
    t.coeffs = {d.head(n), d.segment(n, n)};
    return t;
  }

  /// Holds `p` for the whole window.
  static PolyTrajectory stationary(const Vec2& p, double start, double horizon, int degree) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(2 * (degree + 1));
    d(0) = p.x();
    d(degree + 1) = p.y();
    return from_decision(d, start, horizon, degree);
  }

  void validate() const {
    if (degree < 0) throw ValidationError("degree: must be non-negative");
    for (const auto& c : coeffs) {
      if (c.size() != degree + 1) throw ValidationError("coeffs: expected degree + 1 entries");
      if (!c.allFinite()) throw ValidationError("coeffs: must be finite");
    }
  }
};

/// r_j = j (j-1) ... (j-deriv+1) t^(j-deriv) for j >= deriv, else 0.
inline Eigen::RowVectorXd basis_row(double t, int degree, int deriv) {
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(degree + 1);
  if (deriv < 0 || deriv > degree) return r;
  for (int j = deriv; j <= degree; ++j) {
    double factor = 1.0;
    for (int i = 0; i < deriv; ++i) factor *= j - i;
    r(j) = factor * std::pow(t, j - deriv);
  }
  return r;
}

struct TrajectorySample {
  Vec2 value = Vec2::Zero();
  bool extrapolated = false;
};

inline TrajectorySample sample(const PolyTrajectory& traj, double t, int deriv) {
  const Eigen::RowVectorXd r = basis_row(t - traj.start_time, traj.degree, deriv);
  return {{r.dot(traj.coeffs[0]), r.dot(traj.coeffs[1])}, !traj.covers(t)};
}

inline Vec2 evaluate(const PolyTrajectory& traj, double t, int deriv) {
  return sample(traj, t, deriv).value;
}

/// Coefficients of p(s + shift) given those of p(s).
inline Eigen::VectorXd shift_polynomial(const Eigen::VectorXd& c, double shift) {
  const Eigen::Index n = c.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double binom = 1.0;  // C(j, k)
    double power = 1.0;  // shift^(j - k)
    for (Eigen::Index k = j; k >= 0; --k) {
      out(k) += binom * power * c(j);
      binom = binom * static_cast<double>(k) / static_cast<double>(j - k + 1);
      power *= shift;
    }
  }
  return out;
}

/// Same curve, re-expressed with time origin `new_start`.
inline PolyTrajectory rebase(const PolyTrajectory& traj, double new_start, double horizon) {
  PolyTrajectory out = traj;
  const double shift = new_start - traj.start_time;
  out.coeffs = {shift_polynomial(traj.coeffs[0], shift), shift_polynomial(traj.coeffs[1], shift)};
  out.start_time = new_start;
  out.horizon = horizon;
  return out;
}

// ---------------------------------------------------------------------------
// Cost terms

/// M with c' M c = integral over [t0, t1] of (d^k/dt^k sum_j c_j t^j)^2 dt.
inline Eigen::MatrixXd derivative_gram(int degree, int deriv, double t0, double t1) {
  const int n = degree + 1;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  if (deriv > degree) return m;
  auto falling = [](int j, int k) {
    double f = 1.0;
    for (int i = 0; i < k; ++i) f *= j - i;
    return f;
  };
  for (int i = deriv; i <= degree; ++i) {
    for (int j = deriv; j <= degree; ++j) {
      const int p = i + j - 2 * deriv;
      m(i, j) = falling(i, deriv) * falling(j, deriv) *
                (std::pow(t1, p + 1) - std::pow(t0, p + 1)) / (p + 1);
    }
  }
  return m;
}

/// Single-axis block of the derivative penalty
/// integral of w_lower (x^(n-1))^2 + w_upper (x^(n))^2.
inline Eigen::MatrixXd derivative_cost_block(int degree, int deriv_order, double w_lower,
                                             double w_upper, double t0, double t1) {
  if (!(t1 > t0)) throw ValidationError("t1: must exceed t0");
  Eigen::MatrixXd h = w_upper * derivative_gram(degree, deriv_order, t0, t1);
  if (deriv_order >= 1) h += w_lower * derivative_gram(degree, deriv_order - 1, t0, t1);
  return h;
}

inline Eigen::MatrixXd derivative_cost_hessian(const PlannerConfig& cfg, double t0, double t1) {
  const Eigen::MatrixXd block = derivative_cost_block(
      cfg.poly_degree, cfg.deriv_order, cfg.weight_lower_deriv, cfg.weight_deriv, t0, t1);
  const Eigen::Index n = block.rows();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  h.topLeftCorner(n, n) = block;
  h.bottomRightCorner(n, n) = block;
  return h;
}

/// D' hessian D + gradient' D.
struct QuadraticTerm {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
};

/// Q (x_des - r c)^2 for one axis, constant dropped.
inline QuadraticTerm endpoint_cost_axis(double x_des, double t, double weight, int degree) {
  if (!(weight >= 0.0)) throw ValidationError("weight_final: must be non-negative");
  const Eigen::RowVectorXd r = basis_row(t, degree, 0);
  return {weight * r.transpose() * r, -2.0 * weight * x_des * r.transpose()};
}

inline QuadraticTerm endpoint_cost(const Vec2& x_des, double t, double weight, int degree) {
  const Eigen::Index n = degree + 1;
  QuadraticTerm out{Eigen::MatrixXd::Zero(2 * n, 2 * n), Eigen::VectorXd::Zero(2 * n)};
  for (int axis = 0; axis < 2; ++axis) {
    const auto term = endpoint_cost_axis(x_des(axis), t, weight, degree);
    out.hessian.block(axis * n, axis * n, n, n) = term.hessian;
    out.gradient.segment(axis * n, n) = term.gradient;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Obstacle cost
//
// c(x) = (x - x_obs) / (exp(K (d - rho)) d), with d the distance from x to
// the obstacle surface, floored at min_obstacle_distance.

inline Vec2 collision_direction(const Vec2& x, const ObstacleCircle& obs, double smoothness,
                                double threshold, double min_distance = 1e-3,
                                const Vec2& fallback_heading = Vec2::UnitX()) {
  const Vec2 rel = x - obs.center;
  const double center_dist = rel.norm();
  if (center_dist < 1e-12) {
    Vec2 dir = fallback_heading.norm() > 1e-12 ? fallback_heading.normalized() : Vec2::UnitX();
    const double mag = (obs.radius + min_distance) /
                       (std::exp(smoothness * (min_distance - threshold)) * min_distance);
    return dir * mag;
  }
  const double d = std::max(center_dist - obs.radius, min_distance);
  return rel / (std::exp(smoothness * (d - threshold)) * d);
}

/// |c| as a function of the distance s to the obstacle centre, with its first
/// two derivatives. Below the distance floor the magnitude continues linearly
/// (C1) so it keeps pushing outward.
struct ObstacleMagnitude {
  double value = 0.0;
  double slope = 0.0;
  double curvature = 0.0;
};

inline ObstacleMagnitude obstacle_magnitude(double s, double radius, double smoothness,
                                            double threshold, double min_distance) {
  const double s_floor = radius + min_distance;
  const double s_eval = std::max(s, s_floor);
  const double d = s_eval - radius;
  const double g = s_eval / (d * std::exp(smoothness * (d - threshold)));
  const double h = 1.0 / s_eval - 1.0 / d - smoothness;
  const double dh = -1.0 / (s_eval * s_eval) + 1.0 / (d * d);
  if (s >= s_floor) return {g, g * h, g * (h * h + dh)};
  return {g + g * h * (s - s_floor), g * h, 0.0};
}

/// Quadrature nodes of the obstacle integral: trajectory-relative times and
/// weights v(t) * tau, with v the (floored) speed along the linearization
/// trajectory.
struct CollisionQuadrature {
  std::vector<double> times;
  std::vector<double> weights;
};

inline CollisionQuadrature collision_quadrature(const PolyTrajectory& lin, const PlannerConfig& cfg,
                                                double t0, double t_end) {
  CollisionQuadrature q;
  const int steps = static_cast<int>(std::lround((t_end - t0) / cfg.tau));
  for (int k = 1; k <= steps; ++k) {
    const double t = t0 + k * cfg.tau;
    const double speed = std::max(evaluate(lin, t, 1).norm(), cfg.min_speed);
    q.times.push_back(t - t0);
    q.weights.push_back(speed * cfg.tau);
  }
  return q;
}

/// Sampled obstacle cost Q_obs * sum_k w_k * sum_o |c_o(x(t_k))| as a
/// function of the decision vector (weights held fixed).
inline double collision_surrogate(const Eigen::VectorXd& decision, const CollisionQuadrature& quad,
                                  std::span<const ObstacleCircle> obstacles,
                                  const PlannerConfig& cfg) {
  const int deg = cfg.poly_degree;
  const Eigen::Index n = deg + 1;
  double total = 0.0;
  for (std::size_t k = 0; k < quad.times.size(); ++k) {
    const Eigen::RowVectorXd r = basis_row(quad.times[k], deg, 0);
    const Vec2 x(r.dot(decision.head(n)), r.dot(decision.segment(n, n)));
    double phi = 0.0;
    for (const auto& o : obstacles) {
      phi += obstacle_magnitude((x - o.center).norm(), o.radius, cfg.smoothness,
                                cfg.obstacle_threshold, cfg.min_obstacle_distance)
                 .value;
    }
    total += quad.weights[k] * phi;
  }
  return cfg.weight_obstacle * total;
}

struct CollisionTerms {
  QuadraticTerm quadratic;              // D' H D + F' D model around `linearization`
  Eigen::VectorXd linearization;        // decision vector of the previous trajectory
  Eigen::VectorXd surrogate_gradient;   // exact gradient of the sampled cost there
  double surrogate_value = 0.0;
  CollisionQuadrature quadrature;
};

/// Second-order model of the sampled obstacle cost around `prev`, which is
/// re-expressed with time origin t0. The curvature keeps only the radial,
/// convex part of each obstacle term; the assembled Hessian is then
/// projected onto the PSD cone.
inline CollisionTerms collision_cost_terms(const PolyTrajectory& prev,
                                           std::span<const ObstacleCircle> obstacles,
                                           const PlannerConfig& cfg, double t0, double t_end) {
  const int deg = cfg.poly_degree;
  const Eigen::Index n = deg + 1;
  if (prev.degree != deg) throw ValidationError("prev: degree differs from the planner config");

  CollisionTerms out;
  const PolyTrajectory lin = rebase(prev, t0, t_end - t0);
  out.linearization = lin.decision();
  out.quadrature = collision_quadrature(lin, cfg, t0, t_end);
  out.surrogate_gradient = Eigen::VectorXd::Zero(2 * n);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  out.quadratic = {Eigen::MatrixXd::Zero(2 * n, 2 * n), Eigen::VectorXd::Zero(2 * n)};
  if (obstacles.empty() || cfg.weight_obstacle == 0.0) return out;

  const Eigen::VectorXd& d0 = out.linearization;
  double value = 0.0;
  for (std::size_t k = 0; k < out.quadrature.times.size(); ++k) {
    const double w = out.quadrature.weights[k] * cfg.weight_obstacle;
    const Eigen::RowVectorXd r = basis_row(out.quadrature.times[k], deg, 0);
    const Vec2 x(r.dot(d0.head(n)), r.dot(d0.segment(n, n)));
    const Vec2 vel = evaluate(lin, t0 + out.quadrature.times[k], 1);
    Vec2 grad = Vec2::Zero();
    Eigen::Matrix2d curv = Eigen::Matrix2d::Zero();
    for (const auto& o : obstacles) {
      const Vec2 rel = x - o.center;
      const double s = rel.norm();
      const auto mag = obstacle_magnitude(s, o.radius, cfg.smoothness, cfg.obstacle_threshold,
                                          cfg.min_obstacle_distance);
      value += w * mag.value;
      const Vec2 u = s > 1e-12 ? Vec2(rel / s)
                               : (vel.norm() > 1e-12 ? Vec2(vel.normalized()) : Vec2::UnitX());
      grad += mag.slope * u;
      curv += std::max(mag.curvature, 0.0) * u * u.transpose();
    }
    grad *= w;
    curv *= w;
    out.surrogate_gradient.head(n) += grad.x() * r.transpose();
    out.surrogate_gradient.segment(n, n) += grad.y() * r.transpose();
    const Eigen::MatrixXd rr = r.transpose() * r;
    hess.topLeftCorner(n, n) += curv(0, 0) * rr;
    hess.topRightCorner(n, n) += curv(0, 1) * rr;
    hess.bottomLeftCorner(n, n) += curv(1, 0) * rr;
    hess.bottomRightCorner(n, n) += curv(1, 1) * rr;
  }
  out.surrogate_value = value;

  // D' H D + F' D must reproduce the gradient at d0: 2 H d0 + F = g.
  Eigen::MatrixXd h = 0.25 * (hess + hess.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  h = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() *
      eig.eigenvectors().transpose();
  out.quadratic.hessian = h;
  out.quadratic.gradient = out.surrogate_gradient - 2.0 * h * d0;
  return out;
}

// ---------------------------------------------------------------------------
// Constraints

struct ConstraintSet {
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd a_in;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::Index first_dynamic_row = 0;  // inequality rows from here on are derivative bounds
  std::vector<Waypoint> deferred;      // beyond the horizon, kept for later cycles
};

/// Rows of the derivative bounds lb <= x^(k)(t) <= ub for both axes.
inline void append_axis_rows(std::vector<Eigen::RowVectorXd>& rows, const Eigen::RowVectorXd& r,
                             int axis, Eigen::Index n) {
  Eigen::RowVectorXd full = Eigen::RowVectorXd::Zero(2 * n);
  full.segment(axis * n, n) = r;
  rows.push_back(std::move(full));
}

/// Derivative-bound sample times in trajectory-relative time. The start is
/// excluded because the initial state is already pinned.
inline std::vector<double> dynamic_sample_times(const PlannerConfig& cfg) {
  std::vector<double> ts;
  for (int j = 1; j <= cfg.n_dyn_samples; ++j) ts.push_back(j * cfg.horizon / cfg.n_dyn_samples);
  return ts;
}

inline ConstraintSet assemble_constraints(const RobotState& state0,
                                          std::span<const Waypoint> waypoints,
                                          std::span<const SafePolyhedron> regions,
                                          const PlannerConfig& cfg, double now,
                                          double dyn_scale = 1.0) {
  const int deg = cfg.poly_degree;
  const Eigen::Index n = deg + 1;
  std::vector<Eigen::RowVectorXd> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<Eigen::RowVectorXd> in_rows;
  std::vector<double> lo, hi;
  ConstraintSet out;

  const std::array<Vec2, 3> initial{state0.position, state0.velocity, state0.acceleration};
  for (int k = 0; k <= std::min(2, deg); ++k) {
    const Eigen::RowVectorXd r = basis_row(0.0, deg, k);
    for (int axis = 0; axis < 2; ++axis) {
      append_axis_rows(eq_rows, r, axis, n);
      eq_rhs.push_back(initial[static_cast<std::size_t>(k)](axis));
    }
  }
  for (const auto& wp : waypoints) {
    const double rel = wp.stamp - now;
    if (rel <= 1e-9) continue;
    if (rel > cfg.horizon + 1e-9) {
      out.deferred.push_back(wp);
      continue;
    }
    const Eigen::RowVectorXd r = basis_row(rel, deg, 0);
    for (int axis = 0; axis < 2; ++axis) {
      append_axis_rows(eq_rows, r, axis, n);
      eq_rhs.push_back(wp.position(axis));
    }
  }

  for (const auto& region : regions) {
    const double rel = region.stamp - now;
    if (rel < 0.0) continue;
    const Eigen::RowVectorXd r = basis_row(rel, deg, 0);
    for (const auto& hp : region.halfplanes) {
      Eigen::RowVectorXd full(2 * n);
      full << hp.normal.x() * r, hp.normal.y() * r;
      in_rows.push_back(std::move(full));
      lo.push_back(-kInf);
      hi.push_back(hp.offset);
    }
  }
  out.first_dynamic_row = static_cast<Eigen::Index>(in_rows.size());
  const auto times = dynamic_sample_times(cfg);
  for (int k = 1; k <= cfg.deriv_order; ++k) {
    const auto& bound = cfg.dyn_limits[static_cast<std::size_t>(k - 1)];
    for (double t : times) {
      const Eigen::RowVectorXd r = basis_row(t, deg, k);
      for (int axis = 0; axis < 2; ++axis) {
        append_axis_rows(in_rows, r, axis, n);
        lo.push_back(bound.lower * dyn_scale);
        hi.push_back(bound.upper * dyn_scale);
      }
    }
  }

  auto stack = [&](const std::vector<Eigen::RowVectorXd>& rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), 2 * n);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    return m;
  };
  out.a_eq = stack(eq_rows);
  out.b_eq = Eigen::Map<const Eigen::VectorXd>(eq_rhs.data(), static_cast<Eigen::Index>(eq_rhs.size()));
  out.a_in = stack(in_rows);
  out.lower = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  out.upper = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  return out;
}

/// Largest absolute violation of the constraint set by D.
inline double constraint_violation(const ConstraintSet& cs, const Eigen::VectorXd& d) {
  double worst = 0.0;
  if (cs.a_eq.rows() > 0) worst = (cs.a_eq * d - cs.b_eq).cwiseAbs().maxCoeff();
  if (cs.a_in.rows() > 0) {
    const Eigen::VectorXd v = cs.a_in * d;
    worst = std::max(worst, (cs.lower - v).maxCoeff());
    worst = std::max(worst, (v - cs.upper).maxCoeff());
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Planning

enum class PlanStatus { kOptimal, kReusedPrevious, kRelaxedDynamics, kFailed };

inline const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::kOptimal: return "optimal";
    case PlanStatus::kReusedPrevious: return "reused_previous";
    case PlanStatus::kRelaxedDynamics: return "relaxed_dynamics";
    case PlanStatus::kFailed: return "failed";
  }
  return "unknown";
}

struct PlanAttempt {
  PlanStatus stage = PlanStatus::kOptimal;
  bool accepted = false;
  std::string note;
};

struct SolveStats {
  int iterations = 0;
  double runtime_ms = 0.0;
  double max_violation = 0.0;
};

struct PlanOutcome {
  PolyTrajectory trajectory;
  PlanStatus status = PlanStatus::kFailed;
  std::vector<PlanAttempt> attempts;  // in the order they were tried
  SolveStats stats;
  std::vector<Waypoint> deferred;
  std::string diagnostic;
};

struct PlanInputs {
  RobotState state;
  Vec2 goal = Vec2::Zero();  // x_des for the end cost
  std::vector<Waypoint> waypoints;
  std::vector<SafePolyhedron> regions;
  std::vector<ObstacleCircle> obstacles;
  std::optional<PolyTrajectory> previous;
  bool previous_was_reused = false;
  double now = 0.0;
};

/// Objective of the trajectory QP for the given linearization; returns the
/// solver-convention Hessian (2 H_net + regularization) and gradient F_net.
struct PlanObjective {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
};

inline PlanObjective build_objective(const PlannerConfig& cfg, const RobotState& state,
                                     const Vec2& goal, std::span<const ObstacleCircle> obstacles,
                                     const std::optional<PolyTrajectory>& previous, double now) {
  const int deg = cfg.poly_degree;
  Eigen::MatrixXd h = derivative_cost_hessian(cfg, 0.0, cfg.horizon);
  const auto end = endpoint_cost(goal, cfg.horizon, cfg.weight_final, deg);
  h += end.hessian;
  Eigen::VectorXd f = end.gradient;
  if (!obstacles.empty() && cfg.weight_obstacle > 0.0) {
    PolyTrajectory lin;
    if (previous && previous->degree == deg) {
      lin = *previous;
    } else {
      // straight line at constant speed toward the goal
      lin = PolyTrajectory::stationary(state.position, now, cfg.horizon, deg);
      if (deg >= 1) {
        const Vec2 v = (goal - state.position) / cfg.horizon;
        lin.coeffs[0](1) = v.x();
        lin.coeffs[1](1) = v.y();
      }
    }
    const auto coll = collision_cost_terms(lin, obstacles, cfg, now, now + cfg.horizon);
    h += coll.quadratic.hessian;
    f += coll.quadratic.gradient;
  }
  Eigen::MatrixXd p = h + h.transpose();  // 2 H, symmetrized
  p.diagonal().array() += 2.0 * cfg.regularization;
  return {std::move(p), std::move(f)};
}

class TrajectoryPlanner {
 public:
  explicit TrajectoryPlanner(PlannerConfig cfg, QpSettings qp = {})
      : cfg_(std::move(cfg)), solver_(qp) {
    cfg_.validate();
  }

  const PlannerConfig& config() const { return cfg_; }

  PlanOutcome plan(const PlanInputs& in) {
    const auto t_start = std::chrono::steady_clock::now();
    PlanOutcome out;
    try {
      in.state.validate();
      if (!all_finite(in.goal)) throw ValidationError("goal: must be finite");
      plan_impl(in, out);
    } catch (const std::exception& e) {
      out.status = PlanStatus::kFailed;
      out.diagnostic = e.what();
      out.attempts.push_back({PlanStatus::kFailed, true, e.what()});
      out.trajectory = PolyTrajectory::stationary(in.state.position, in.now, cfg_.horizon,
                                                  cfg_.poly_degree);
      warm_.reset();
    }
    out.stats.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count();
    return out;
  }

 private:
  static constexpr double kFeasibilityTol = 1e-6;

  struct Attempt {
    bool ok = false;
    Eigen::VectorXd decision;
    std::string note;
  };

  Attempt solve(const PlanObjective& obj, const ConstraintSet& cs, PlanOutcome& out) {
    QpProblem prob{obj.hessian, obj.gradient, cs.a_eq, cs.b_eq, cs.a_in, cs.lower, cs.upper};
    std::optional<QpWarmStart> warm;
    if (warm_) {
      warm = QpWarmStart{warm_->x, warm_->y.size() == cs.a_eq.rows() + cs.a_in.rows()
                                       ? warm_->y
                                       : Eigen::VectorXd()};
    }
    const QpSolution sol = solver_.solve(prob, warm ? &*warm : nullptr);
    out.stats.iterations += sol.iterations;
    Attempt a;
    if (sol.status != QpStatus::kSolved) {
      a.note = std::string("qp ") + to_string(sol.status);
      return a;
    }
    const double viol = constraint_violation(cs, sol.x);
    out.stats.max_violation = viol;
    if (viol > kFeasibilityTol) {
      a.note = "qp solution violates constraints by " + std::to_string(viol);
      return a;
    }
    a.ok = true;
    a.decision = sol.x;
    last_solution_ = QpWarmStart{sol.x, sol.y};
    return a;
  }

  bool previous_still_safe(const PlanInputs& in, std::string& why) const {
    if (!in.previous) {
      why = "no previous trajectory";
      return false;
    }
    if (in.previous_was_reused) {
      why = "previous trajectory already reused for one cycle";
      return false;
    }
    if (!in.previous->covers(in.now)) {
      why = "previous trajectory does not cover the current time";
      return false;
    }
    for (const auto& region : in.regions) {
      if (!region.feasible) {
        why = "a safe region is infeasible";
        return false;
      }
      if (!in.previous->covers(region.stamp)) continue;
      if (!contains(region, evaluate(*in.previous, region.stamp, 0), kFeasibilityTol)) {
        why = "previous trajectory leaves the current safe region";
        return false;
      }
    }
    return true;
  }

  void plan_impl(const PlanInputs& in, PlanOutcome& out) {
    const int deg = cfg_.poly_degree;
    last_solution_.reset();
    if (warm_ && in.previous) {
      // shift the previous solution to the new time origin
      const PolyTrajectory shifted = rebase(*in.previous, in.now, cfg_.horizon);
      warm_->x = shifted.decision();
    }

    const PlanObjective obj =
        build_objective(cfg_, in.state, in.goal, in.obstacles, in.previous, in.now);
    const bool regions_ok =
        std::all_of(in.regions.begin(), in.regions.end(), [](const auto& r) { return r.feasible; });

    ConstraintSet cs = assemble_constraints(in.state, in.waypoints, in.regions, cfg_, in.now);
    out.deferred = cs.deferred;

    auto finish = [&](PlanStatus status, const Eigen::VectorXd& d) {
      out.status = status;
      out.trajectory = PolyTrajectory::from_decision(d, in.now, cfg_.horizon, deg);
      if (last_solution_) warm_ = last_solution_;
    };

    if (regions_ok) {
      const Attempt a = solve(obj, cs, out);
      out.attempts.push_back({PlanStatus::kOptimal, a.ok, a.note});
      if (a.ok) return finish(PlanStatus::kOptimal, a.decision);
    } else {
      out.attempts.push_back(
          {PlanStatus::kOptimal, false, "ego anchor penetrates a predicted peer region"});
    }

    std::string why;
    if (previous_still_safe(in, why)) {
      out.attempts.push_back({PlanStatus::kReusedPrevious, true, ""});
      out.status = PlanStatus::kReusedPrevious;
      out.trajectory = *in.previous;
      return;
    }
    out.attempts.push_back({PlanStatus::kReusedPrevious, false, why});

    if (regions_ok) {
      const ConstraintSet relaxed = assemble_constraints(in.state, in.waypoints, in.regions, cfg_,
                                                         in.now, cfg_.relax_factor);
      const Attempt a = solve(obj, relaxed, out);
      out.attempts.push_back({PlanStatus::kRelaxedDynamics, a.ok, a.note});
      if (a.ok) return finish(PlanStatus::kRelaxedDynamics, a.decision);
    } else {
      out.attempts.push_back(
          {PlanStatus::kRelaxedDynamics, false, "ego anchor penetrates a predicted peer region"});
    }

    out.attempts.push_back({PlanStatus::kFailed, true, "all fallback steps exhausted"});
    out.status = PlanStatus::kFailed;
    out.diagnostic = out.attempts[out.attempts.size() - 2].note;
    out.trajectory = PolyTrajectory::stationary(in.state.position, in.now, cfg_.horizon, deg);
    warm_.reset();
  }

  PlannerConfig cfg_;
  QpSolver solver_;
  std::optional<QpWarmStart> warm_;
  std::optional<QpWarmStart> last_solution_;
};

/// One-shot planning without carried solver state.
inline PlanOutcome plan(const PlanInputs& in, const PlannerConfig& cfg) {
  return TrajectoryPlanner(cfg).plan(in);
}

}  // namespace dmtraj
