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

// Range scan to circular obstacle extraction.
//
// A scan is cut into runs of consecutive returns; each run is a candidate
// obstacle. Runs that look like a single round object are fitted with a
// least-squares circle. Everything else (walls, corners, merged objects) is
// chopped into short chunks, each enclosed by its minimal enclosing circle.
// Every emitted circle contains all returns it was built from.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "dmtraj/core.hpp"

namespace dmtraj {

struct Pose2 {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
};

struct ObstacleCircle {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;

  void validate() const {
    if (!all_finite(center)) throw ValidationError("center: must be finite");
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw ValidationError("radius: must be positive and finite");
    }
  }
};

/// Beam j points along ego heading + angle_min + j * angle_increment.
/// A non-finite range means no reflection.
struct RangeScan {
  double angle_min = 0.0;
  double angle_increment = 0.0;
  std::vector<double> ranges;
  double max_range = 0.0;
  double stamp = 0.0;
  Pose2 ego_pose;
  double range_resolution = 0.0;  // quantization step of the ranges, 0 if exact

  static bool is_return(double r) { return std::isfinite(r); }

  double beam_angle(std::size_t j) const {
    return ego_pose.heading + angle_min + static_cast<double>(j) * angle_increment;
  }

  bool full_circle() const {
    return static_cast<double>(ranges.size()) * angle_increment >=
           2.0 * std::numbers::pi - 1e-9;
  }

  void validate() const {
    if (!(angle_increment > 0.0)) throw ValidationError("angle_increment: must be positive");
    if (!(max_range > 0.0)) throw ValidationError("max_range: must be positive");
    for (double r : ranges) {
      if (is_return(r) && !(r > 0.0 && r <= max_range)) {
        throw ValidationError("ranges: finite ranges must lie in (0, max_range]");
      }
    }
  }
};

struct PerceptionConfig {
  double inflation_margin = 0.0;
  double point_radius_floor = 0.05;
  /// Runs wider than this (radians) are split at local range minima.
  double split_extent = std::numbers::pi / 2.0;
  /// Chunk length cap for runs that are not fitted as a single circle.
  double max_chunk_length = 0.3;
  /// Consecutive returns further apart than
  /// gap_base + gap_ratio * range * angle_increment start a new object.
  double gap_base = 0.3;
  double gap_ratio = 3.0;
  /// Largest radius accepted from the least-squares circle fit.
  double max_fit_radius = 1.0;
};

/// Inclusive index range [first, last] into RangeScan::ranges.
struct Cluster {
  std::size_t first = 0;
  std::size_t last = 0;
  bool operator==(const Cluster&) const = default;
};

inline Vec2 project_return(double range, double beam_angle, const Vec2& ego_position) {
  if (!std::isfinite(range) || !(range > 0.0) || !std::isfinite(beam_angle) ||
      !all_finite(ego_position)) {
    throw ValidationError("range: projection needs a finite positive range and finite pose");
  }
  return {range * std::cos(beam_angle) + ego_position.x(),
          range * std::sin(beam_angle) + ego_position.y()};
}

inline std::vector<Cluster> segment_scan(const RangeScan& scan) {
  std::vector<Cluster> out;
  const std::size_t n = scan.ranges.size();
  std::size_t i = 0;
  while (i < n) {
    if (!RangeScan::is_return(scan.ranges[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && RangeScan::is_return(scan.ranges[j + 1])) ++j;
    out.push_back({i, j});
    i = j + 1;
  }
  return out;
}

namespace detail {

inline bool circle_contains(const ObstacleCircle& c, const Vec2& p) {
  return (p - c.center).norm() <= c.radius * (1.0 + 1e-12) + 1e-12;
}

inline ObstacleCircle circle_from_two(const Vec2& a, const Vec2& b) {
  return {(a + b) / 2.0, (a - b).norm() / 2.0};
}

inline ObstacleCircle circle_from_three(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a;
  const Vec2 ac = c - a;
  const double det = 2.0 * (ab.x() * ac.y() - ab.y() * ac.x());
  if (std::abs(det) < 1e-14 * std::max(1.0, ab.squaredNorm() * ac.squaredNorm())) {
    // collinear: the two furthest points span the circle
    ObstacleCircle best = circle_from_two(a, b);
    for (const auto& cand : {circle_from_two(a, c), circle_from_two(b, c)}) {
      if (cand.radius > best.radius) best = cand;
    }
    return best;
  }
  const double ab2 = ab.squaredNorm();
  const double ac2 = ac.squaredNorm();
  const Vec2 offset((ac.y() * ab2 - ab.y() * ac2) / det, (ab.x() * ac2 - ac.x() * ab2) / det);
  return {a + offset, offset.norm()};
}

}  // namespace detail

/// Smallest circle containing every point (incremental Welzl construction).
inline ObstacleCircle min_enclosing_circle(std::span<const Vec2> pts) {
  if (pts.empty()) throw ValidationError("points: need at least one point");
  ObstacleCircle c{pts[0], 0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (detail::circle_contains(c, pts[i])) continue;
    c = {pts[i], 0.0};
    for (std::size_t j = 0; j < i; ++j) {
      if (detail::circle_contains(c, pts[j])) continue;
      c = detail::circle_from_two(pts[i], pts[j]);
      for (std::size_t k = 0; k < j; ++k) {
        if (!detail::circle_contains(c, pts[k])) {
          c = detail::circle_from_three(pts[i], pts[j], pts[k]);
        }
      }
    }
  }
  return c;
}

struct CircleFit {
  ObstacleCircle circle;
  double rms_residual = 0.0;
};

/// Geometric least-squares circle: algebraic (Kasa) start refined by
/// Gauss-Newton on the point-to-circle distances. Needs three or more points
/// that are not collinear.
inline std::optional<CircleFit> fit_circle(std::span<const Vec2> pts) {
  const std::size_t n = pts.size();
  if (n < 3) return std::nullopt;
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(n);

  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 q = pts[i] - mean;
    a(i, 0) = q.x();
    a(i, 1) = q.y();
    a(i, 2) = 1.0;
    b(i) = -q.squaredNorm();
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 3) return std::nullopt;
  const Eigen::Vector3d sol = qr.solve(b);
  Vec2 center(-sol(0) / 2.0, -sol(1) / 2.0);
  const double r2 = center.squaredNorm() - sol(2);
  if (!(r2 > 0.0) || !std::isfinite(r2)) return std::nullopt;
  double radius = std::sqrt(r2);

  for (int iter = 0; iter < 20; ++iter) {
    Eigen::MatrixXd jac(n, 3);
    Eigen::VectorXd res(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 d = (pts[i] - mean) - center;
      const double dist = std::max(d.norm(), 1e-15);
      res(i) = dist - radius;
      jac(i, 0) = -d.x() / dist;
      jac(i, 1) = -d.y() / dist;
      jac(i, 2) = -1.0;
    }
    const Eigen::Vector3d step = jac.colPivHouseholderQr().solve(-res);
    if (!step.allFinite()) return std::nullopt;
    center += step.head<2>();
    radius += step(2);
    if (step.norm() < 1e-13 * std::max(1.0, radius)) break;
  }
  if (!(radius > 0.0) || !std::isfinite(radius) || !all_finite(center)) return std::nullopt;

  double sq = 0.0;
  for (const auto& p : pts) {
    const double r = ((p - mean) - center).norm() - radius;
    sq += r * r;
  }
  return CircleFit{{center + mean, radius}, std::sqrt(sq / static_cast<double>(n))};
}

namespace detail {

struct ProjectedRun {
  std::vector<Vec2> points;
  std::vector<double> ranges;
  std::vector<double> angles;
};

inline void push_chunked(const ProjectedRun& run, std::size_t begin, std::size_t end,
                         double max_len, std::vector<std::vector<Vec2>>& out) {
  std::size_t start = begin;
  for (std::size_t i = begin + 1; i < end; ++i) {
    if ((run.points[i] - run.points[start]).norm() > max_len) {
      out.emplace_back(run.points.begin() + static_cast<std::ptrdiff_t>(start),
                       run.points.begin() + static_cast<std::ptrdiff_t>(i));
      start = i;
    }
  }
  out.emplace_back(run.points.begin() + static_cast<std::ptrdiff_t>(start),
                   run.points.begin() + static_cast<std::ptrdiff_t>(end));
}

// Split an elongated run at local range minima, then cap the chunk length.
inline std::vector<std::vector<Vec2>> chop_run(const ProjectedRun& run,
                                                const PerceptionConfig& cfg) {
  std::vector<std::vector<Vec2>> chunks;
  const std::size_t n = run.points.size();
  std::vector<std::size_t> cuts{0};
  const double extent = run.angles.back() - run.angles.front();
  if (extent > cfg.split_extent) {
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (run.ranges[i] < run.ranges[i - 1] && run.ranges[i] <= run.ranges[i + 1]) {
        cuts.push_back(i);
      }
    }
  }
  cuts.push_back(n);
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    if (cuts[c] < cuts[c + 1]) push_chunked(run, cuts[c], cuts[c + 1], cfg.max_chunk_length, chunks);
  }
  return chunks;
}

inline ObstacleCircle enclose(std::span<const Vec2> pts, const PerceptionConfig& cfg) {
  if (pts.size() == 1) {
    return {pts[0], std::max(cfg.point_radius_floor, cfg.inflation_margin)};
  }
  ObstacleCircle c = min_enclosing_circle(pts);
  c.radius = std::max(c.radius, 1e-9) + cfg.inflation_margin;
  return c;
}

// Accepts a least-squares circle only if it describes a compact object seen
// from outside: small residual, bounded radius, sensor outside the circle.
inline std::optional<ObstacleCircle> round_object(const ProjectedRun& run, const Vec2& ego,
                                                  double resolution,
                                                  const PerceptionConfig& cfg) {
  if (run.points.size() < 3) return std::nullopt;
  const auto fit = fit_circle(run.points);
  if (!fit) return std::nullopt;
  const auto& c = fit->circle;
  if (c.radius > cfg.max_fit_radius) return std::nullopt;
  const double tol = 2.0 * resolution + 1e-6 + 1e-3 * c.radius;
  if (fit->rms_residual > tol) return std::nullopt;
  if ((c.center - ego).norm() <= c.radius) return std::nullopt;

  double reach = c.radius;
  for (const auto& p : run.points) reach = std::max(reach, (p - c.center).norm());
  return ObstacleCircle{c.center, reach + resolution + cfg.inflation_margin};
}

}  // namespace detail

inline std::vector<ObstacleCircle> scan_to_obstacles(const RangeScan& scan,
                                                     const PerceptionConfig& cfg = {}) {
  scan.validate();
  auto clusters = segment_scan(scan);

  // index sequences per run, joining the seam of a full-circle scan
  std::vector<std::vector<std::size_t>> runs;
  for (const auto& c : clusters) {
    std::vector<std::size_t> idx;
    for (std::size_t i = c.first; i <= c.last; ++i) idx.push_back(i);
    runs.push_back(std::move(idx));
  }
  if (runs.size() >= 2 && scan.full_circle() && clusters.front().first == 0 &&
      clusters.back().last + 1 == scan.ranges.size()) {
    auto& tail = runs.back();
    tail.insert(tail.end(), runs.front().begin(), runs.front().end());
    runs.erase(runs.begin());
  }

  std::vector<ObstacleCircle> out;
  const Vec2& ego = scan.ego_pose.position;
  for (const auto& idx : runs) {
    // break the run where consecutive returns jump apart
    detail::ProjectedRun run;
    double unwrap = 0.0;
    std::size_t prev = idx.front();
    auto flush = [&]() {
      if (run.points.empty()) return;
      if (auto round = detail::round_object(run, ego, scan.range_resolution, cfg)) {
        out.push_back(*round);
      } else {
        for (const auto& chunk : detail::chop_run(run, cfg)) {
          out.push_back(detail::enclose(chunk, cfg));
        }
      }
      run = {};
    };
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t i = idx[k];
      if (k > 0 && i < prev) unwrap += static_cast<double>(scan.ranges.size()) * scan.angle_increment;
      const double angle = scan.beam_angle(i) + unwrap;
      const double r = scan.ranges[i];
      const Vec2 p = project_return(r, angle, ego);
      if (!run.points.empty()) {
        const double gap = (p - run.points.back()).norm();
        const double allowed =
            cfg.gap_base + cfg.gap_ratio * std::min(r, run.ranges.back()) * scan.angle_increment;
        if (gap > allowed) flush();
      }
      run.points.push_back(p);
      run.ranges.push_back(r);
      run.angles.push_back(angle);
      prev = i;
    }
    flush();
  }
  return out;
}

}  // namespace dmtraj
