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

// One robot, one peer coming the other way, one obstacle: runs a few
// receding-horizon cycles by hand and prints where the robot goes.

#include <cstdio>
#include <optional>
#include <vector>

#include "dmtraj/perception.hpp"
#include "dmtraj/prediction.hpp"
#include "dmtraj/saferegion.hpp"
#include "dmtraj/simworld.hpp"
#include "dmtraj/trajopt.hpp"

int main() {
  using namespace dmtraj;
  const PlannerConfig cfg;
  TrajectoryPlanner planner(cfg);

  World world;
  world.discs.push_back({Vec2(2.0, 0.6), 0.4});
  const AlignedBox box = world.bounds;

  RobotState ego;
  ego.robot_id = 1;
  RobotState peer;
  peer.robot_id = 2;
  peer.position = Vec2(5.0, 0.0);
  peer.velocity = Vec2(-0.5, 0.0);

  std::optional<PolyTrajectory> current;
  for (int cycle = 0; cycle <= 100; ++cycle) {
    const double now = cycle * cfg.replan_period;
    ego.stamp = now;
    peer.stamp = now;

    PlanInputs in;
    in.state = ego;
    in.goal = Vec2(6.0, 0.0);
    in.previous = current;
    in.now = now;
    in.obstacles = scan_to_obstacles(raycast_scan(world, {ego.position, 0.0}, {}, now));
    const PeerPrediction pred = predict_horizon(peer, cfg, now);
    for (const auto& s : pred.samples) {
      const std::vector<FootprintRegion> peers{s.region};
      in.regions.push_back(shrink_by_ego(safe_polyhedron(ego.position, peers, box, s.time),
                                         ego.size.rotation_invariant_radius()));
    }

    const PlanOutcome out = planner.plan(in);
    if (cycle % 10 == 0) {
      std::printf("t=%.2f  pos=(%.3f, %.3f)  status=%s  obstacles=%zu  %.2f ms\n", now,
                  ego.position.x(), ego.position.y(), to_string(out.status),
                  in.obstacles.size(), out.stats.runtime_ms);
    }
    ego = step_robot(ego, out.trajectory, out.status, cfg.replan_period);
    current = out.status == PlanStatus::kFailed ? std::nullopt : std::optional(out.trajectory);
    peer.position += peer.velocity * cfg.replan_period;
  }
  return 0;
}
