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


// Kinematic 2D world used in place of a physics simulator: wall segments,
// disc obstacles, a ray-cast range finder and ground-truth contact checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dmtraj/core.hpp"
#include "dmtraj/perception.hpp"
#include "dmtraj/saferegion.hpp"
#include "dmtraj/trajopt.hpp"

namespace dmtraj {

struct Segment {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
};

inline double distance_to_segment(const Vec2& p, const Segment& s) {
  const Vec2 ab = s.b - s.a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - s.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (s.a + t * ab)).norm();
}

struct World {
  std::vector<Segment> walls;
  std::vector<ObstacleCircle> discs;
  AlignedBox bounds{{-10.0, -10.0}, {10.0, 10.0}};

  void validate() const {
    if (!all_finite(bounds.min) || !all_finite(bounds.max) ||
        !(bounds.max.array() > bounds.min.array()).all()) {
      throw ValidationError("bounds: must be finite with max > min on both axes");
    }
    for (std::size_t i = 0; i < walls.size(); ++i) {
      if (!all_finite(walls[i].a) || !all_finite(walls[i].b)) {
        throw ValidationError("walls[" + std::to_string(i) + "]: endpoints must be finite");
      }
    }
    for (std::size_t i = 0; i < discs.size(); ++i) {
      try {
        discs[i].validate();
      } catch (const ValidationError& e) {
        throw ValidationError("discs[" + std::to_string(i) + "]." + e.what());
      }
    }
  }
};

struct LidarSpec {
  int beams = 360;
  double fov = 2.0 * std::numbers::pi;
  double max_range = 8.0;
  double rate = 5.0;                // Hz
  double range_resolution = 1e-3;   // ranges are rounded to this step, 0 for exact

  bool full_circle() const { return fov >= 2.0 * std::numbers::pi - 1e-9; }

  double angle_increment() const {
    if (full_circle() || beams == 1) return fov / beams;
    return fov / (beams - 1);
  }

  void validate() const {
    if (beams < 1) throw ValidationError("beams: must be at least 1");
    if (!(fov > 0.0) || fov > 2.0 * std::numbers::pi + 1e-9) {
      throw ValidationError("fov: must lie in (0, 2 pi]");
    }
    if (!(max_range > 0.0) || !std::isfinite(max_range)) {
      throw ValidationError("max_range: must be positive and finite");
    }
    if (!(rate > 0.0) || !std::isfinite(rate)) throw ValidationError("rate: must be positive");
    if (!(range_resolution >= 0.0)) throw ValidationError("range_resolution: must be >= 0");
  }
};

/// Distance along the unit ray o + t d to the circle, or +inf.
inline double ray_circle(const Vec2& o, const Vec2& d, const Vec2& c, double r) {
  const Vec2 m = o - c;
  const double b = m.dot(d);
  const double q = m.squaredNorm() - r * r;
  if (q > 0.0 && b > 0.0) return kInf;
  const double disc = b * b - q;
  if (disc < 0.0) return kInf;
  const double t = -b - std::sqrt(disc);
  return t >= 0.0 ? t : kInf;  // origin inside the disc: no return
}

/// Distance along the unit ray o + t d to the segment, or +inf.
inline double ray_segment(const Vec2& o, const Vec2& d, const Segment& s) {
  const Vec2 e = s.b - s.a;
  const double den = d.x() * e.y() - d.y() * e.x();
  if (std::abs(den) < 1e-15) return kInf;  // parallel, grazing hits ignored
  const Vec2 w = s.a - o;
  const double t = (w.x() * e.y() - w.y() * e.x()) / den;
  const double u = (w.x() * d.y() - w.y() * d.x()) / den;
  if (t < 0.0 || u < 0.0 || u > 1.0) return kInf;
  return t;
}

inline RangeScan raycast_scan(const World& world, const Pose2& pose, const LidarSpec& spec,
                              double stamp = 0.0) {
  RangeScan scan;
  scan.angle_min = spec.full_circle() ? -std::numbers::pi : -spec.fov / 2.0;
  scan.angle_increment = spec.angle_increment();
  scan.max_range = spec.max_range;
  scan.stamp = stamp;
  scan.ego_pose = pose;
  scan.range_resolution = spec.range_resolution;
  scan.ranges.assign(static_cast<std::size_t>(spec.beams), kInf);
  for (int j = 0; j < spec.beams; ++j) {
    const double a = scan.beam_angle(static_cast<std::size_t>(j));
    const Vec2 d(std::cos(a), std::sin(a));
    double best = kInf;
    for (const auto& w : world.walls) best = std::min(best, ray_segment(pose.position, d, w));
    for (const auto& c : world.discs) {
      best = std::min(best, ray_circle(pose.position, d, c.center, c.radius));
    }
    if (spec.range_resolution > 0.0 && std::isfinite(best)) {
      best = std::round(best / spec.range_resolution) * spec.range_resolution;
    }
    if (best > 0.0 && best <= spec.max_range) scan.ranges[static_cast<std::size_t>(j)] = best;
  }
  return scan;
}

enum class CollisionKind { kRobotRobot, kRobotObstacle, kRobotWall };

inline const char* to_string(CollisionKind k) {
  switch (k) {
    case CollisionKind::kRobotRobot: return "robot-robot";
    case CollisionKind::kRobotObstacle: return "robot-obstacle";
    case CollisionKind::kRobotWall: return "robot-wall";
  }
  return "unknown";
}

/// `other` is a robot id, a disc index or a wall index depending on `kind`.
struct CollisionEvent {
  double time = 0.0;
  CollisionKind kind = CollisionKind::kRobotRobot;
  int robot = 0;
  int other = 0;
  double penetration = 0.0;
};

struct RobotBody {
  int id = 0;
  Vec2 position = Vec2::Zero();
  double radius = 0.0;
};

/// Strict overlaps only: touching bodies do not collide. Robot pairs are
/// reported with the smaller id first.
inline std::vector<CollisionEvent> check_collisions(std::span<const RobotBody> robots,
                                                    const World& world, double time) {
  std::vector<CollisionEvent> out;
  for (std::size_t i = 0; i < robots.size(); ++i) {
    for (std::size_t j = i + 1; j < robots.size(); ++j) {
      const double depth = robots[i].radius + robots[j].radius -
                           (robots[i].position - robots[j].position).norm();
      if (depth > 0.0) {
        out.push_back({time, CollisionKind::kRobotRobot, std::min(robots[i].id, robots[j].id),
                       std::max(robots[i].id, robots[j].id), depth});
      }
    }
  }
  for (const auto& r : robots) {
    for (std::size_t k = 0; k < world.discs.size(); ++k) {
      const auto& d = world.discs[k];
      const double depth = r.radius + d.radius - (r.position - d.center).norm();
      if (depth > 0.0) {
        out.push_back({time, CollisionKind::kRobotObstacle, r.id, static_cast<int>(k), depth});
      }
    }
    for (std::size_t k = 0; k < world.walls.size(); ++k) {
      const double depth = r.radius - distance_to_segment(r.position, world.walls[k]);
      if (depth > 0.0) {
        out.push_back({time, CollisionKind::kRobotWall, r.id, static_cast<int>(k), depth});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.kind, a.robot, a.other) < std::tie(b.kind, b.robot, b.other);
  });
  return out;
}

/// Perfect tracking of the planned trajectory. A robot whose plan failed
/// holds its position while its velocity decays.
inline RobotState step_robot(const RobotState& state, const PolyTrajectory& traj,
                             PlanStatus status, double dt) {
  RobotState next = state;
  if (dt <= 0.0) return next;
  next.stamp = state.stamp + dt;
  if (status == PlanStatus::kFailed) {
    next.velocity = 0.5 * state.velocity;
    next.acceleration = Vec2::Zero();
    return next;
  }
  next.position = evaluate(traj, next.stamp, 0);
  next.velocity = evaluate(traj, next.stamp, 1);
  next.acceleration = evaluate(traj, next.stamp, 2);
  return next;
}

}  // namespace dmtraj
