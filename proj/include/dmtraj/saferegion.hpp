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

// Convex safe regions built from supporting half-planes of peer footprints.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dmtraj/core.hpp"
#include "dmtraj/prediction.hpp"

namespace dmtraj {

/// {p : normal . p <= offset}
struct HalfPlane {
  Vec2 normal = Vec2::UnitX();
  double offset = 0.0;

  double violation(const Vec2& p) const { return normal.dot(p) - offset; }
};

struct AlignedBox {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  bool contains(const Vec2& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct SafePolyhedron {
  double stamp = 0.0;
  std::vector<HalfPlane> halfplanes;
  bool feasible = true;
  std::vector<int> penetrating_peers;  // indices into the peer list
};

/// The ego anchor lies inside (or on the wrong side of) a peer region.
class EgoPenetration : public std::runtime_error {
 public:
  EgoPenetration() : std::runtime_error("ego point penetrates the peer region") {}
};

/// Support value min_{p in region} normal . p.
inline double support_min(const FootprintRegion& region, const Vec2& normal) {
  if (region.shape == FootprintShape::kCircle) {
    return normal.dot(region.center) - region.extent * normal.norm();
  }
  return normal.dot(region.center) - region.extent * normal.cwiseAbs().sum();
}

/// Half-plane whose normal points from the ego toward the peer centre,
/// touching the peer region. Empty when the ego is not strictly on the
/// admissible side.
inline std::optional<HalfPlane> try_supporting_halfplane(const Vec2& ego,
                                                         const FootprintRegion& peer) {
  const Vec2 d = peer.center - ego;
  const double dist = d.norm();
  if (!(dist > 1e-12)) return std::nullopt;
  const Vec2 eta = d / dist;
  const HalfPlane hp{eta, support_min(peer, eta)};
  if (!(hp.violation(ego) < 0.0)) return std::nullopt;
  return hp;
}

inline HalfPlane supporting_halfplane(const Vec2& ego, const FootprintRegion& peer) {
  if (auto hp = try_supporting_halfplane(ego, peer)) return *hp;
  throw EgoPenetration();
}

inline std::vector<HalfPlane> box_halfplanes(const AlignedBox& box) {
  return {{Vec2(1.0, 0.0), box.max.x()},
          {Vec2(-1.0, 0.0), -box.min.x()},
          {Vec2(0.0, 1.0), box.max.y()},
          {Vec2(0.0, -1.0), -box.min.y()}};
}

inline bool intersects(const FootprintRegion& region, const AlignedBox& box) {
  const Vec2 nearest = region.center.cwiseMax(box.min).cwiseMin(box.max);
  if (region.shape == FootprintShape::kCircle) {
    return (nearest - region.center).norm() <= region.extent;
  }
  return (nearest - region.center).cwiseAbs().maxCoeff() <= region.extent;
}

inline SafePolyhedron safe_polyhedron(const Vec2& ego, std::span<const FootprintRegion> peers,
                                      const AlignedBox& workspace, double stamp = 0.0) {
  SafePolyhedron poly;
  poly.stamp = stamp;
  for (std::size_t i = 0; i < peers.size(); ++i) {
    if (!intersects(peers[i], workspace)) continue;
    if (auto hp = try_supporting_halfplane(ego, peers[i])) {
      poly.halfplanes.push_back(*hp);
    } else {
      poly.feasible = false;
      poly.penetrating_peers.push_back(static_cast<int>(i));
    }
  }
  for (const auto& hp : box_halfplanes(workspace)) poly.halfplanes.push_back(hp);
  return poly;
}

/// Erodes every half-plane by a disc of radius `ego_radius`, so constraining
/// the ego centre keeps its whole footprint inside the original region.
inline SafePolyhedron shrink_by_ego(SafePolyhedron poly, double ego_radius) {
  for (auto& hp : poly.halfplanes) hp.offset -= ego_radius * hp.normal.norm();
  return poly;
}

inline SafePolyhedron shrink_by_ego(const SafePolyhedron& poly, const SizeSpec& ego) {
  ego.validate("ego_size");
  return shrink_by_ego(poly, ego.rotation_invariant_radius());
}

/// Loosens every half-plane that `position` currently violates by that
/// violation, scaled by 1 - (elapsed / recovery_time)^3 and zero afterwards.
/// A robot that has drifted into the eroded margin is then asked to back out
/// gradually; the cubic start matches what a jerk-limited robot at rest can do.
inline SafePolyhedron relax_for_recovery(SafePolyhedron poly, const Vec2& position,
                                         double elapsed, double recovery_time) {
  const double s = std::clamp(elapsed / recovery_time, 0.0, 1.0);
  const double keep = 1.0 - s * s * s;
  if (keep == 0.0) return poly;
  for (auto& hp : poly.halfplanes) {
    const double v = hp.violation(position);
    if (v > 0.0) hp.offset += keep * v;
  }
  return poly;
}

inline bool contains(const SafePolyhedron& poly, const Vec2& p, double tol) {
  for (const auto& hp : poly.halfplanes) {
    if (hp.violation(p) > tol) return false;
  }
  return true;
}

}  // namespace dmtraj
