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


// Scenario files: YAML with a closed schema. Unknown keys, wrong types and
// out-of-range values are reported with their key path and line number.

#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dmtraj/bus.hpp"
#include "dmtraj/core.hpp"
#include "dmtraj/perception.hpp"
#include "dmtraj/simworld.hpp"

namespace dmtraj {

struct RobotSpec {
  int id = 0;
  Vec2 start = Vec2::Zero();
  std::optional<AlignedBox> spawn_zone;  // start is drawn uniformly from here when set
  SizeSpec size{{0.25}};
  std::vector<Waypoint> goals;      // time-stamped desired positions (soft)
  std::vector<Waypoint> waypoints;  // positions the trajectory must pass (hard)
  std::optional<std::vector<DerivativeBound>> dyn_limits;

  double radius() const { return size.rotation_invariant_radius(); }
};

struct Scenario {
  std::string name = "scenario";
  double duration = 30.0;
  std::uint64_t seed = 0;
  double goal_tolerance = 0.1;
  World world;
  LidarSpec lidar;
  BusConfig bus;
  PlannerConfig planner;
  PerceptionConfig perception;
  std::vector<RobotSpec> robots;

  PlannerConfig planner_for(const RobotSpec& r) const {
    PlannerConfig cfg = planner;
    if (r.dyn_limits) cfg.dyn_limits = *r.dyn_limits;
    return cfg;
  }

  /// Start positions for a given seed: spawn zones are sampled in robot order.
  std::vector<Vec2> starts(std::uint64_t run_seed) const {
    std::mt19937_64 rng(run_seed);
    std::vector<Vec2> out;
    for (const auto& r : robots) {
      if (r.spawn_zone) {
        std::uniform_real_distribution<double> ux(r.spawn_zone->min.x(), r.spawn_zone->max.x());
        std::uniform_real_distribution<double> uy(r.spawn_zone->min.y(), r.spawn_zone->max.y());
        const double x = ux(rng);
        out.emplace_back(x, uy(rng));
      } else {
        out.push_back(r.start);
      }
    }
    return out;
  }
};

namespace detail {

class SchemaReader {
 public:
  [[noreturn]] static void fail(const YAML::Node& node, const std::string& path,
                                const std::string& msg) {
    std::string where = path.empty() ? "<root>" : path;
    if (node.IsDefined() && node.Mark().line >= 0) {
      where += " (line " + std::to_string(node.Mark().line + 1) + ")";
    }
    throw ValidationError(where + ": " + msg);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  static std::string index(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
  }

  static void check_map(const YAML::Node& node, const std::string& path,
                        const std::set<std::string>& allowed) {
    if (!node.IsMap()) fail(node, path, "expected a mapping");
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, join(path, key), "unknown key");
    }
  }

  static void check_seq(const YAML::Node& node, const std::string& path) {
    if (!node.IsSequence()) fail(node, path, "expected a list");
  }

  static double number(const YAML::Node& node, const std::string& path) {
    if (!node.IsScalar()) fail(node, path, "expected a number");
    try {
      const auto s = node.as<std::string>();
      if (s == ".inf" || s == "inf") return kInf;
      if (s == "-.inf" || s == "-inf") return -kInf;
      return node.as<double>();
    } catch (const YAML::Exception&) {
      fail(node, path, "expected a number");
    }
  }

  static long integer(const YAML::Node& node, const std::string& path) {
    if (!node.IsScalar()) fail(node, path, "expected an integer");
    try {
      return node.as<long>();
    } catch (const YAML::Exception&) {
      fail(node, path, "expected an integer");
    }
  }

  static bool boolean(const YAML::Node& node, const std::string& path) {
    try {
      return node.as<bool>();
    } catch (const YAML::Exception&) {
      fail(node, path, "expected true or false");
    }
  }

  static Vec2 vec2(const YAML::Node& node, const std::string& path) {
    if (!node.IsSequence() || node.size() != 2) fail(node, path, "expected [x, y]");
    const Vec2 v(number(node[0], index(path, 0)), number(node[1], index(path, 1)));
    if (!all_finite(v)) fail(node, path, "must be finite");
    return v;
  }

  static void positive(const YAML::Node& node, const std::string& path, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(node, path, "must be positive");
  }

  static AlignedBox box(const YAML::Node& node, const std::string& path) {
    check_map(node, path, {"min", "max"});
    if (!node["min"] || !node["max"]) fail(node, path, "needs min and max");
    AlignedBox b{vec2(node["min"], join(path, "min")), vec2(node["max"], join(path, "max"))};
    if (!(b.max.array() > b.min.array()).all()) fail(node, path, "max must exceed min");
    return b;
  }

  // Applies a setter per present key, checking positivity where asked.
  template <typename F>
  static void maybe(const YAML::Node& map, const std::string& path, const char* key, F&& apply) {
    const YAML::Node n = map[key];
    if (n) apply(n, join(path, key));
  }
};

inline std::vector<Waypoint> read_waypoints(const YAML::Node& node, const std::string& path) {
  using R = SchemaReader;
  R::check_seq(node, path);
  std::vector<Waypoint> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const auto p = R::index(path, i);
    R::check_map(node[i], p, {"t", "position"});
    if (!node[i]["t"] || !node[i]["position"]) R::fail(node[i], p, "needs t and position");
    const double t = R::number(node[i]["t"], R::join(p, "t"));
    if (!(t >= 0.0) || !std::isfinite(t)) R::fail(node[i]["t"], R::join(p, "t"), "must be >= 0");
    out.push_back({t, R::vec2(node[i]["position"], R::join(p, "position"))});
  }
  return out;
}

inline std::vector<DerivativeBound> read_bounds(const YAML::Node& node, const std::string& path) {
  using R = SchemaReader;
  R::check_seq(node, path);
  std::vector<DerivativeBound> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const auto p = R::index(path, i);
    if (!node[i].IsSequence() || node[i].size() != 2) R::fail(node[i], p, "expected [lower, upper]");
    const DerivativeBound b{R::number(node[i][0], R::index(p, 0)),
                            R::number(node[i][1], R::index(p, 1))};
    if (!(b.lower <= b.upper)) R::fail(node[i], p, "lower must not exceed upper");
    out.push_back(b);
  }
  return out;
}

inline void read_planner(const YAML::Node& node, const std::string& path, PlannerConfig& cfg) {
  using R = SchemaReader;
  R::check_map(node, path,
               {"horizon", "tau", "replan_period", "deriv_order", "weight_lower_deriv",
                "weight_deriv", "weight_final", "weight_obstacle", "obstacle_threshold",
                "smoothness", "min_obstacle_distance", "min_speed", "dyn_limits",
                "n_dyn_samples", "half_accel", "staleness_limit", "relax_factor",
                "safety_margin", "recovery_time", "regularization"});
  auto num = [&](const char* key, double& dst) {
    R::maybe(node, path, key, [&](const YAML::Node& n, const std::string& p) { dst = R::number(n, p); });
  };
  num("horizon", cfg.horizon);
  num("tau", cfg.tau);
  num("replan_period", cfg.replan_period);
  num("weight_lower_deriv", cfg.weight_lower_deriv);
  num("weight_deriv", cfg.weight_deriv);
  num("weight_final", cfg.weight_final);
  num("weight_obstacle", cfg.weight_obstacle);
  num("obstacle_threshold", cfg.obstacle_threshold);
  num("smoothness", cfg.smoothness);
  num("min_obstacle_distance", cfg.min_obstacle_distance);
  num("min_speed", cfg.min_speed);
  num("staleness_limit", cfg.staleness_limit);
  num("relax_factor", cfg.relax_factor);
  num("safety_margin", cfg.safety_margin);
  num("recovery_time", cfg.recovery_time);
  num("regularization", cfg.regularization);
  R::maybe(node, path, "deriv_order", [&](const YAML::Node& n, const std::string& p) {
    cfg.deriv_order = static_cast<int>(R::integer(n, p));
    cfg.poly_degree = 2 * cfg.deriv_order - 1;
  });
  R::maybe(node, path, "n_dyn_samples", [&](const YAML::Node& n, const std::string& p) {
    cfg.n_dyn_samples = static_cast<int>(R::integer(n, p));
  });
  R::maybe(node, path, "half_accel", [&](const YAML::Node& n, const std::string& p) {
    cfg.half_accel = R::boolean(n, p);
  });
  R::maybe(node, path, "dyn_limits", [&](const YAML::Node& n, const std::string& p) {
    cfg.dyn_limits = read_bounds(n, p);
  });
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    R::fail(node, path, e.what());
  }
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text) {
  using R = detail::SchemaReader;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ValidationError("<root> (line " + std::to_string(e.mark.line + 1) + "): " + e.msg);
  }
  Scenario sc;
  R::check_map(root, "",
               {"name", "duration", "seed", "goal_tolerance", "world", "lidar", "bus", "planner",
                "perception", "robots"});

  if (root["name"]) sc.name = root["name"].as<std::string>();
  if (!root["duration"]) R::fail(root, "duration", "required");
  sc.duration = R::number(root["duration"], "duration");
  R::positive(root["duration"], "duration", sc.duration);
  R::maybe(root, "", "seed", [&](const YAML::Node& n, const std::string& p) {
    const long s = R::integer(n, p);
    if (s < 0) R::fail(n, p, "must be non-negative");
    sc.seed = static_cast<std::uint64_t>(s);
  });
  R::maybe(root, "", "goal_tolerance", [&](const YAML::Node& n, const std::string& p) {
    sc.goal_tolerance = R::number(n, p);
    R::positive(n, p, sc.goal_tolerance);
  });

  if (const auto w = root["world"]) {
    R::check_map(w, "world", {"bounds", "walls", "discs"});
    if (w["bounds"]) sc.world.bounds = R::box(w["bounds"], "world.bounds");
    if (const auto walls = w["walls"]) {
      R::check_seq(walls, "world.walls");
      for (std::size_t i = 0; i < walls.size(); ++i) {
        const auto p = R::index("world.walls", i);
        if (!walls[i].IsSequence() || walls[i].size() != 4) {
          R::fail(walls[i], p, "expected [x1, y1, x2, y2]");
        }
        Segment s{{R::number(walls[i][0], p), R::number(walls[i][1], p)},
                  {R::number(walls[i][2], p), R::number(walls[i][3], p)}};
        if (!all_finite(s.a) || !all_finite(s.b)) R::fail(walls[i], p, "must be finite");
        sc.world.walls.push_back(s);
      }
    }
    if (const auto discs = w["discs"]) {
      R::check_seq(discs, "world.discs");
      for (std::size_t i = 0; i < discs.size(); ++i) {
        const auto p = R::index("world.discs", i);
        R::check_map(discs[i], p, {"center", "radius"});
        if (!discs[i]["center"] || !discs[i]["radius"]) R::fail(discs[i], p, "needs center and radius");
        ObstacleCircle c{R::vec2(discs[i]["center"], R::join(p, "center")),
                         R::number(discs[i]["radius"], R::join(p, "radius"))};
        R::positive(discs[i]["radius"], R::join(p, "radius"), c.radius);
        sc.world.discs.push_back(c);
      }
    }
  }

  if (const auto l = root["lidar"]) {
    R::check_map(l, "lidar", {"beams", "fov", "max_range", "rate", "range_resolution"});
    R::maybe(l, "lidar", "beams", [&](const YAML::Node& n, const std::string& p) {
      sc.lidar.beams = static_cast<int>(R::integer(n, p));
    });
    auto num = [&](const char* key, double& dst) {
      R::maybe(l, "lidar", key, [&](const YAML::Node& n, const std::string& p) { dst = R::number(n, p); });
    };
    num("fov", sc.lidar.fov);
    num("max_range", sc.lidar.max_range);
    num("rate", sc.lidar.rate);
    num("range_resolution", sc.lidar.range_resolution);
    try {
      sc.lidar.validate();
    } catch (const ValidationError& e) {
      R::fail(l, "lidar", e.what());
    }
  }

  if (const auto b = root["bus"]) {
    R::check_map(b, "bus", {"broadcast_period", "latency", "drop_probability"});
    auto num = [&](const char* key, double& dst) {
      R::maybe(b, "bus", key, [&](const YAML::Node& n, const std::string& p) { dst = R::number(n, p); });
    };
    num("broadcast_period", sc.bus.broadcast_period);
    num("latency", sc.bus.latency);
    num("drop_probability", sc.bus.drop_probability);
    try {
      sc.bus.validate();
    } catch (const ValidationError& e) {
      R::fail(b, "bus", e.what());
    }
  }

  if (root["planner"]) detail::read_planner(root["planner"], "planner", sc.planner);

  if (const auto pc = root["perception"]) {
    R::check_map(pc, "perception",
                 {"inflation_margin", "point_radius_floor", "split_extent", "max_chunk_length",
                  "gap_base", "gap_ratio", "max_fit_radius"});
    auto num = [&](const char* key, double& dst, bool strictly_positive) {
      R::maybe(pc, "perception", key, [&](const YAML::Node& n, const std::string& p) {
        dst = R::number(n, p);
        if (strictly_positive) R::positive(n, p, dst);
        if (!(dst >= 0.0)) R::fail(n, p, "must be non-negative");
      });
    };
    num("inflation_margin", sc.perception.inflation_margin, false);
    num("point_radius_floor", sc.perception.point_radius_floor, true);
    num("split_extent", sc.perception.split_extent, true);
    num("max_chunk_length", sc.perception.max_chunk_length, true);
    num("gap_base", sc.perception.gap_base, false);
    num("gap_ratio", sc.perception.gap_ratio, false);
    num("max_fit_radius", sc.perception.max_fit_radius, true);
  }

  if (!root["robots"]) R::fail(root, "robots", "required");
  const auto robots = root["robots"];
  R::check_seq(robots, "robots");
  if (robots.size() == 0) R::fail(robots, "robots", "need at least one robot");
  std::set<int> ids;
  for (std::size_t i = 0; i < robots.size(); ++i) {
    const auto node = robots[i];
    const auto p = R::index("robots", i);
    R::check_map(node, p, {"id", "start", "spawn_zone", "size", "goals", "waypoints", "dyn_limits"});
    RobotSpec r;
    if (!node["id"]) R::fail(node, R::join(p, "id"), "required");
    r.id = static_cast<int>(R::integer(node["id"], R::join(p, "id")));
    if (!ids.insert(r.id).second) {
      R::fail(node["id"], R::join(p, "id"), "duplicate robot id " + std::to_string(r.id));
    }
    if (!node["start"] && !node["spawn_zone"]) R::fail(node, p, "needs start or spawn_zone");
    if (node["start"]) r.start = R::vec2(node["start"], R::join(p, "start"));
    if (node["spawn_zone"]) {
      r.spawn_zone = R::box(node["spawn_zone"], R::join(p, "spawn_zone"));
      if (!node["start"]) r.start = 0.5 * (r.spawn_zone->min + r.spawn_zone->max);
    }
    if (const auto sz = node["size"]) {
      const auto sp = R::join(p, "size");
      R::check_seq(sz, sp);
      r.size.dims.clear();
      for (std::size_t k = 0; k < sz.size(); ++k) {
        const double d = R::number(sz[k], R::index(sp, k));
        R::positive(sz[k], R::index(sp, k), d);
        r.size.dims.push_back(d);
      }
      try {
        r.size.validate(sp);
      } catch (const ValidationError& e) {
        R::fail(sz, sp, e.what());
      }
    }
    if (!node["goals"]) R::fail(node, R::join(p, "goals"), "required");
    r.goals = detail::read_waypoints(node["goals"], R::join(p, "goals"));
    if (r.goals.empty()) R::fail(node["goals"], R::join(p, "goals"), "need at least one goal");
    for (std::size_t k = 0; k < r.goals.size(); ++k) {
      if (r.goals[k].stamp > sc.duration) {
        R::fail(node["goals"][k], R::index(R::join(p, "goals"), k), "stamp exceeds duration");
      }
    }
    if (node["waypoints"]) r.waypoints = detail::read_waypoints(node["waypoints"], R::join(p, "waypoints"));
    if (node["dyn_limits"]) {
      r.dyn_limits = detail::read_bounds(node["dyn_limits"], R::join(p, "dyn_limits"));
      PlannerConfig cfg = sc.planner;
      cfg.dyn_limits = *r.dyn_limits;
      try {
        cfg.validate();
      } catch (const ValidationError& e) {
        R::fail(node["dyn_limits"], R::join(p, "dyn_limits"), e.what());
      }
    }
    sc.robots.push_back(std::move(r));
  }

  // nominal starts must be free
  std::vector<RobotBody> bodies;
  for (const auto& r : sc.robots) {
    if (!sc.world.bounds.contains(r.start)) {
      throw ValidationError("robots: start of robot " + std::to_string(r.id) +
                            " lies outside world.bounds");
    }
    bodies.push_back({r.id, r.start, r.radius()});
  }
  const auto contacts = check_collisions(bodies, sc.world, 0.0);
  if (!contacts.empty()) {
    const auto& c = contacts.front();
    throw ValidationError("robots: start of robot " + std::to_string(c.robot) + " is in " +
                          to_string(c.kind) + " contact");
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("scenario: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Scenario sc = parse_scenario(ss.str());
  return sc;
}

}  // namespace dmtraj
