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


// Decentralized simulation loop and report files.
//
// Each cycle, at the planner rate: broadcast states on the bus, refresh lidar
// obstacles at the sensor rate, let every agent predict its peers, build its
// safe regions and plan, then advance the world with perfect tracking and
// record ground-truth contacts.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dmtraj/bus.hpp"
#include "dmtraj/perception.hpp"
#include "dmtraj/prediction.hpp"
#include "dmtraj/saferegion.hpp"
#include "dmtraj/scenario.hpp"
#include "dmtraj/simworld.hpp"
#include "dmtraj/trajopt.hpp"

namespace dmtraj {

struct TrajectoryRow {
  double time = 0.0;
  int id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  PlanStatus status = PlanStatus::kOptimal;
};

struct CycleRecord {
  double time = 0.0;
  int id = 0;
  PlanStatus status = PlanStatus::kOptimal;
  std::string attempts;  // "stage:accepted|stage:rejected|..."
  int iterations = 0;
  double runtime_ms = 0.0;
  int peers = 0;
  int obstacles = 0;
};

struct RobotResult {
  int id = 0;
  Vec2 start = Vec2::Zero();
  Vec2 goal = Vec2::Zero();
  Vec2 final_position = Vec2::Zero();
  double goal_error = 0.0;
  double arrival_time = -1.0;  // first time within tolerance, -1 if never
  int failed_cycles = 0;
  int reused_cycles = 0;
  int relaxed_cycles = 0;
};

enum class FailureKind { kNone, kCollision, kPlannerFailed, kGoalTimeout };

inline const char* to_string(FailureKind k) {
  switch (k) {
    case FailureKind::kNone: return "none";
    case FailureKind::kCollision: return "collision";
    case FailureKind::kPlannerFailed: return "planner_failed";
    case FailureKind::kGoalTimeout: return "goal_timeout";
  }
  return "unknown";
}

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  double end_time = 0.0;
  double goal_tolerance = 0.1;
  bool success = false;
  FailureKind failure = FailureKind::kNone;
  double min_robot_clearance = kInf;  // min over pairs and time of distance - (r_i + r_j)
  std::vector<RobotResult> robots;
  std::vector<CollisionEvent> events;
  std::vector<TrajectoryRow> rows;
  std::vector<CycleRecord> cycles;
  std::map<int, std::vector<Vec2>> paths;
};

namespace detail {

struct Agent {
  RobotSpec spec;
  PlannerConfig cfg;
  TrajectoryPlanner planner;
  RobotState state;
  std::optional<PolyTrajectory> current;
  PlanStatus status = PlanStatus::kOptimal;
  bool reused_last = false;
  std::vector<ObstacleCircle> obstacles;
  std::vector<Waypoint> waypoints;

  Agent(const RobotSpec& s, const PlannerConfig& c, const Vec2& start)
      : spec(s), cfg(c), planner(c), waypoints(s.waypoints) {
    state.robot_id = s.id;
    state.position = start;
    state.size = s.size;
  }

  double radius() const { return spec.radius(); }
  const Vec2& final_goal() const { return spec.goals.back().position; }

  /// Desired end position: the first goal stamped beyond the horizon,
  /// otherwise the final goal.
  Vec2 desired(double now) const {
    for (const auto& g : spec.goals) {
      if (g.stamp > now + cfg.horizon) return g.position;
    }
    return final_goal();
  }
};

inline std::vector<SafePolyhedron> build_regions(const Agent& a,
                                                 const std::vector<RobotState>& peers,
                                                 const AlignedBox& workspace, double now) {
  std::vector<PeerPrediction> preds;
  preds.reserve(peers.size());
  for (const auto& p : peers) preds.push_back(predict_horizon(p, a.cfg, now));
  const int steps = a.cfg.horizon_steps();
  const double erosion = a.radius() + a.cfg.safety_margin;
  std::vector<SafePolyhedron> regions;
  regions.reserve(static_cast<std::size_t>(steps));
  std::vector<FootprintRegion> footprints(preds.size());
  for (int k = 1; k <= steps; ++k) {
    const double t = now + k * a.cfg.tau;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      footprints[i] = preds[i].samples[static_cast<std::size_t>(k - 1)].region;
    }
    const Vec2 anchor = a.current ? evaluate(*a.current, t, 0) : a.state.position;
    SafePolyhedron poly = safe_polyhedron(anchor, footprints, workspace, t);
    if (!poly.feasible && a.current) {
      SafePolyhedron retry = safe_polyhedron(a.state.position, footprints, workspace, t);
      if (retry.feasible) poly = std::move(retry);
    }
    regions.push_back(relax_for_recovery(shrink_by_ego(std::move(poly), erosion),
                                         a.state.position, t - now, a.cfg.recovery_time));
  }
  return regions;
}

inline std::string attempts_string(const PlanOutcome& out) {
  std::string s;
  for (const auto& a : out.attempts) {
    if (!s.empty()) s += '|';
    s += to_string(a.stage);
    s += a.accepted ? ":accepted" : ":rejected";
  }
  return s;
}

}  // namespace detail

inline RunReport run_scenario(const Scenario& sc, std::uint64_t seed) {
  RunReport rep;
  rep.scenario = sc.name;
  rep.seed = seed;
  rep.goal_tolerance = sc.goal_tolerance;

  BusConfig bus_cfg = sc.bus;
  bus_cfg.seed = seed ^ 0x9e3779b97f4a7c15ULL;
  MessageBus bus(bus_cfg);

  const auto starts = sc.starts(seed);
  std::vector<detail::Agent> agents;
  agents.reserve(sc.robots.size());
  for (std::size_t i = 0; i < sc.robots.size(); ++i) {
    agents.emplace_back(sc.robots[i], sc.planner_for(sc.robots[i]), starts[i]);
  }
  for (const auto& a : agents) {
    rep.robots.push_back({a.spec.id, a.state.position, a.final_goal(), a.state.position,
                          (a.state.position - a.final_goal()).norm(), -1.0, 0, 0, 0});
  }

  const double dt = sc.planner.replan_period;
  const long total_steps = std::lround(sc.duration / dt);
  const double scan_period = 1.0 / sc.lidar.rate;
  double next_scan = 0.0;
  double next_broadcast = 0.0;
  std::set<std::tuple<CollisionKind, int, int>> active;

  auto record_contacts = [&](double t) {
    std::vector<RobotBody> bodies;
    for (const auto& a : agents) bodies.push_back({a.spec.id, a.state.position, a.radius()});
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      for (std::size_t j = i + 1; j < bodies.size(); ++j) {
        rep.min_robot_clearance =
            std::min(rep.min_robot_clearance, (bodies[i].position - bodies[j].position).norm() -
                                                  bodies[i].radius - bodies[j].radius);
      }
    }
    std::set<std::tuple<CollisionKind, int, int>> now_active;
    for (const auto& ev : check_collisions(bodies, sc.world, t)) {
      const auto key = std::make_tuple(ev.kind, ev.robot, ev.other);
      now_active.insert(key);
      if (!active.count(key)) rep.events.push_back(ev);
    }
    active = std::move(now_active);
  };

  auto log_rows = [&](double t) {
    for (const auto& a : agents) {
      rep.rows.push_back({t, a.spec.id, a.state.position, a.state.velocity, a.status});
      rep.paths[a.spec.id].push_back(a.state.position);
    }
  };

  record_contacts(0.0);
  log_rows(0.0);
  double now = 0.0;
  for (long step = 0; step < total_steps; ++step) {
    now = step * dt;
    for (auto& a : agents) a.state.stamp = now;

    if (now + 1e-9 >= next_broadcast) {
      for (const auto& a : agents) bus.broadcast(a.state, now);
      next_broadcast += sc.bus.broadcast_period;
    }
    if (now + 1e-9 >= next_scan) {
      for (auto& a : agents) {
        const RangeScan scan =
            raycast_scan(sc.world, {a.state.position, 0.0}, sc.lidar, now);
        a.obstacles = scan_to_obstacles(scan, sc.perception);
      }
      next_scan += scan_period;
    }

    for (std::size_t i = 0; i < agents.size(); ++i) {
      auto& a = agents[i];
      std::erase_if(a.waypoints, [&](const Waypoint& w) { return w.stamp <= now + 1e-9; });
      const auto peers = bus.latest_states(a.spec.id, now);

      PlanInputs in;
      in.state = a.state;
      in.goal = a.desired(now);
      in.waypoints = a.waypoints;
      in.regions = detail::build_regions(a, peers, sc.world.bounds, now);
      in.obstacles = a.obstacles;
      in.previous = a.current;
      in.previous_was_reused = a.reused_last;
      in.now = now;
      const PlanOutcome out = a.planner.plan(in);

      a.status = out.status;
      a.reused_last = out.status == PlanStatus::kReusedPrevious;
      a.current = out.trajectory;
      auto& res = rep.robots[i];
      if (out.status == PlanStatus::kFailed) ++res.failed_cycles;
      if (out.status == PlanStatus::kReusedPrevious) ++res.reused_cycles;
      if (out.status == PlanStatus::kRelaxedDynamics) ++res.relaxed_cycles;
      rep.cycles.push_back({now, a.spec.id, out.status, detail::attempts_string(out),
                            out.stats.iterations, out.stats.runtime_ms,
                            static_cast<int>(peers.size()), static_cast<int>(a.obstacles.size())});
    }

    for (auto& a : agents) {
      a.state = step_robot(a.state, *a.current, a.status, dt);
      if (a.status == PlanStatus::kFailed) a.current.reset();
    }
    const double t_next = (step + 1) * dt;
    record_contacts(t_next);
    log_rows(t_next);
    now = t_next;

    bool settled = true;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto& a = agents[i];
      const double err = (a.state.position - a.final_goal()).norm();
      if (err <= sc.goal_tolerance && rep.robots[i].arrival_time < 0.0) {
        rep.robots[i].arrival_time = now;
      }
      settled = settled && err <= 0.5 * sc.goal_tolerance && a.state.velocity.norm() < 0.02;
    }
    if (settled) break;
  }
  rep.end_time = now;

  bool all_reached = true;
  bool any_failed = false;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    auto& res = rep.robots[i];
    res.final_position = agents[i].state.position;
    res.goal_error = (res.final_position - res.goal).norm();
    all_reached = all_reached && res.goal_error <= sc.goal_tolerance;
    any_failed = any_failed || res.failed_cycles > 0;
  }
  rep.success = rep.events.empty() && all_reached;
  if (!rep.events.empty()) {
    rep.failure = FailureKind::kCollision;
  } else if (!all_reached) {
    rep.failure = any_failed ? FailureKind::kPlannerFailed : FailureKind::kGoalTimeout;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Output files

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline void write_trajectories_csv(const RunReport& rep, std::ostream& os) {
  os << "time,id,x,y,vx,vy,status\n";
  for (const auto& r : rep.rows) {
    os << fmt(r.time, 3) << ',' << r.id << ',' << fmt(r.position.x()) << ','
       << fmt(r.position.y()) << ',' << fmt(r.velocity.x()) << ',' << fmt(r.velocity.y()) << ','
       << to_string(r.status) << '\n';
  }
}

inline void write_events_csv(const RunReport& rep, std::ostream& os) {
  os << "time,kind,robot,other,penetration\n";
  for (const auto& e : rep.events) {
    os << fmt(e.time, 3) << ',' << to_string(e.kind) << ',' << e.robot << ',' << e.other << ','
       << fmt(e.penetration) << '\n';
  }
}

inline void write_plans_csv(const RunReport& rep, std::ostream& os) {
  os << "time,id,status,attempts,iterations,runtime_ms,peers,obstacles\n";
  for (const auto& c : rep.cycles) {
    os << fmt(c.time, 3) << ',' << c.id << ',' << to_string(c.status) << ',' << c.attempts << ','
       << c.iterations << ',' << fmt(c.runtime_ms, 3) << ',' << c.peers << ',' << c.obstacles
       << '\n';
  }
}

inline nlohmann::json report_json(const RunReport& rep) {
  nlohmann::json j;
  j["scenario"] = rep.scenario;
  j["seed"] = rep.seed;
  j["success"] = rep.success;
  j["failure"] = to_string(rep.failure);
  j["end_time"] = rep.end_time;
  j["goal_tolerance"] = rep.goal_tolerance;
  j["collision_events"] = rep.events.size();
  j["min_robot_clearance"] = std::isfinite(rep.min_robot_clearance) ? rep.min_robot_clearance : 0.0;
  std::map<std::string, int> counts;
  std::vector<double> runtimes;
  for (const auto& c : rep.cycles) {
    ++counts[to_string(c.status)];
    runtimes.push_back(c.runtime_ms);
  }
  j["plan_status_counts"] = counts;
  if (!runtimes.empty()) {
    std::sort(runtimes.begin(), runtimes.end());
    j["plan_runtime_ms"] = {{"median", runtimes[runtimes.size() / 2]},
                            {"p95", runtimes[runtimes.size() * 95 / 100]},
                            {"max", runtimes.back()}};
  }
  for (const auto& r : rep.robots) {
    j["robots"].push_back({{"id", r.id},
                           {"start", {r.start.x(), r.start.y()}},
                           {"goal", {r.goal.x(), r.goal.y()}},
                           {"final_position", {r.final_position.x(), r.final_position.y()}},
                           {"goal_error", r.goal_error},
                           {"arrival_time", r.arrival_time},
                           {"failed_cycles", r.failed_cycles},
                           {"reused_cycles", r.reused_cycles},
                           {"relaxed_cycles", r.relaxed_cycles}});
  }
  return j;
}

/// Overhead view of the executed paths; walls drawn as solid black lines.
inline void write_paths_svg(const RunReport& rep, const Scenario& sc, std::ostream& os) {
  const double scale = 40.0;
  const AlignedBox& b = sc.world.bounds;
  const double w = (b.max.x() - b.min.x()) * scale;
  const double h = (b.max.y() - b.min.y()) * scale;
  auto px = [&](const Vec2& p) {
    return fmt((p.x() - b.min.x()) * scale, 2) + "," + fmt((b.max.y() - p.y()) * scale, 2);
  };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w, 0) << "\" height=\""
     << fmt(h, 0) << "\" viewBox=\"0 0 " << fmt(w, 0) << ' ' << fmt(h, 0) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\" stroke=\"black\"/>\n";
  for (const auto& s : sc.world.walls) {
    const std::string pa = px(s.a), pb = px(s.b);
    os << "<line x1=\"" << pa.substr(0, pa.find(',')) << "\" y1=\"" << pa.substr(pa.find(',') + 1)
       << "\" x2=\"" << pb.substr(0, pb.find(',')) << "\" y2=\"" << pb.substr(pb.find(',') + 1)
       << "\" stroke=\"black\" stroke-width=\"4\"/>\n";
  }
  for (const auto& d : sc.world.discs) {
    const std::string c = px(d.center);
    const auto comma = c.find(',');
    os << "<circle cx=\"" << c.substr(0, comma) << "\" cy=\"" << c.substr(comma + 1) << "\" r=\""
       << fmt(d.radius * scale, 2) << "\" fill=\"#999999\"/>\n";
  }
  std::size_t k = 0;
  for (const auto& [id, pts] : rep.paths) {
    const char* color = colors[k++ % 10];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " " : "") << px(pts[i]);
    os << "\"/>\n";
    for (const auto& r : rep.robots) {
      if (r.id != id) continue;
      const std::string s = px(r.start), g = px(r.goal);
      os << "<circle cx=\"" << s.substr(0, s.find(',')) << "\" cy=\"" << s.substr(s.find(',') + 1)
         << "\" r=\"4\" fill=\"" << color << "\"/>\n";
      os << "<rect x=\"" << fmt(std::stod(g.substr(0, g.find(','))) - 4, 2) << "\" y=\""
         << fmt(std::stod(g.substr(g.find(',') + 1)) - 4, 2)
         << "\" width=\"8\" height=\"8\" fill=\"none\" stroke=\"" << color << "\"/>\n";
    }
  }
  os << "</svg>\n";
}

inline void write_run_outputs(const RunReport& rep, const Scenario& sc,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error(std::string("cannot write ") + (dir / name).string());
    return f;
  };
  {
    auto f = open("trajectories.csv");
    write_trajectories_csv(rep, f);
  }
  {
    auto f = open("events.csv");
    write_events_csv(rep, f);
  }
  {
    auto f = open("plans.csv");
    write_plans_csv(rep, f);
  }
  {
    auto f = open("report.json");
    f << report_json(rep).dump(2) << '\n';
  }
  {
    auto f = open("paths.svg");
    write_paths_svg(rep, sc, f);
  }
}

struct BatchReport {
  std::string scenario;
  int runs = 0;
  int successes = 0;
  std::map<std::string, int> failures;  // taxonomy counts
  std::vector<RunReport> reports;       // trimmed: rows and cycles dropped

  double success_rate() const { return runs ? static_cast<double>(successes) / runs : 0.0; }
};

/// Runs seeds 0 .. n_seeds - 1.
template <typename OnRun = void (*)(const RunReport&)>
inline BatchReport run_batch(const Scenario& sc, int n_seeds, OnRun on_run = [](const RunReport&) {}) {
  if (n_seeds < 1) throw ValidationError("seeds: must be at least 1");
  BatchReport b;
  b.scenario = sc.name;
  for (int s = 0; s < n_seeds; ++s) {
    RunReport rep = run_scenario(sc, static_cast<std::uint64_t>(s));
    on_run(rep);
    ++b.runs;
    if (rep.success) ++b.successes;
    ++b.failures[to_string(rep.failure)];
    rep.rows.clear();
    rep.cycles.clear();
    rep.paths.clear();
    b.reports.push_back(std::move(rep));
  }
  return b;
}

inline nlohmann::json batch_json(const BatchReport& b) {
  nlohmann::json j;
  j["scenario"] = b.scenario;
  j["runs"] = b.runs;
  j["successes"] = b.successes;
  j["success_rate"] = b.success_rate();
  j["failures"] = b.failures;
  for (const auto& r : b.reports) {
    j["per_seed"].push_back({{"seed", r.seed},
                             {"success", r.success},
                             {"failure", to_string(r.failure)},
                             {"collision_events", r.events.size()},
                             {"end_time", r.end_time}});
  }
  return j;
}

}  // namespace dmtraj
