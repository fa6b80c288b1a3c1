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

// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmtraj/runner.hpp"
#include "oracles.hpp"

namespace {

using namespace dmtraj;
namespace fs = std::filesystem;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string bundled(const std::string& name) {
  return std::string(DMTRAJ_SCENARIO_DIR) + "/" + name + ".yaml";
}

Eigen::MatrixXd randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = g(rng);
  return a;
}

// 1. closed-form derivative-cost Hessian against Gauss-Legendre quadrature
Verdict quadrature_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 5.0), w(0.0, 3.0);
  std::uniform_int_distribution<int> pick_deg(1, 9);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const int deg = pick_deg(rng);
    const int n = std::uniform_int_distribution<int>(1, deg)(rng);
    double t0 = u(rng), t1 = u(rng);
    if (t0 > t1) std::swap(t0, t1);
    if (t1 - t0 < 1e-3) t1 = std::min(5.0, t0 + 0.5);
    const double wl = w(rng), wu = w(rng);
    const Eigen::MatrixXd h = derivative_cost_block(deg, n, wl, wu, t0, t1);
    for (int i = 0; i <= deg; ++i) {
      for (int j = 0; j <= deg; ++j) {
        const Eigen::VectorXd ei = Eigen::VectorXd::Unit(deg + 1, i);
        const Eigen::VectorXd ej = Eigen::VectorXd::Unit(deg + 1, j);
        const double ref = oracle::integrate(
            [&](double t) {
              return wl * oracle::poly_derivative(ei, t, n - 1) *
                         oracle::poly_derivative(ej, t, n - 1) +
                     wu * oracle::poly_derivative(ei, t, n) * oracle::poly_derivative(ej, t, n);
            },
            t0, t1, 32);
        worst = std::max(worst, std::abs(h(i, j) - ref) / std::max(1.0, std::abs(ref)));
      }
    }
  }
  return {worst <= 1e-8, "max entry error " + sci(worst) + " (relative above 1) <= 1e-8 over 100 draws"};
}

QpProblem random_qp(std::mt19937_64& rng, int n, int m_eq, int m_in, bool well_conditioned) {
  QpProblem p;
  const Eigen::MatrixXd l = randn(rng, n, n);
  p.hessian = well_conditioned ? Eigen::MatrixXd(l * l.transpose() / n + Eigen::MatrixXd::Identity(n, n))
                               : Eigen::MatrixXd(l * l.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n));
  p.gradient = randn(rng, n, 1);
  const Eigen::VectorXd x0 = randn(rng, n, 1);
  p.a_eq = randn(rng, m_eq, n);
  p.b_eq = p.a_eq * x0;
  p.a_in = randn(rng, m_in, n);
  const Eigen::VectorXd v = p.a_in * x0;
  std::uniform_real_distribution<double> slack(0.0, 1.0);
  p.lower.resize(m_in);
  p.upper.resize(m_in);
  for (int i = 0; i < m_in; ++i) {
    const auto kind = rng() % 3;
    p.lower(i) = kind == 2 ? -kInf : v(i) - slack(rng);
    p.upper(i) = kind == 1 ? kInf : v(i) + slack(rng);
  }
  return p;
}

// 2. QP solver against exhaustive enumeration and a long-run dual gradient method
Verdict qp_oracle() {
  std::mt19937_64 rng(202);
  double worst_small = 0.0, worst_large = 0.0;
  int bad = 0;
  for (int k = 0; k < 200; ++k) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const int m_eq = static_cast<int>(rng() % std::min(n, 3));
    const int m_in = 1 + static_cast<int>(rng() % 7);
    const QpProblem p = random_qp(rng, n, m_eq, m_in, false);
    const auto ref = oracle::enumerate_qp(p.hessian, p.gradient, p.a_eq, p.b_eq, p.a_in, p.lower,
                                          p.upper);
    const auto sol = solve_qp(p);
    if (!ref.feasible || sol.status != QpStatus::kSolved) {
      ++bad;
      continue;
    }
    worst_small = std::max(worst_small, std::abs(sol.objective - ref.objective) /
                                            std::max(1.0, std::abs(ref.objective)));
  }
  for (int k = 0; k < 10; ++k) {
    const int n = 12 + static_cast<int>(rng() % 13);
    const QpProblem p = random_qp(rng, n, 2, n, true);
    Eigen::MatrixXd a(p.a_eq.rows() + p.a_in.rows(), n);
    a << p.a_eq, p.a_in;
    Eigen::VectorXd lo(a.rows()), hi(a.rows());
    lo << p.b_eq, p.lower;
    hi << p.b_eq, p.upper;
    const auto ref = oracle::dual_gradient_qp(p.hessian, p.gradient, a, lo, hi);
    const auto sol = solve_qp(p);
    if (!ref.feasible || sol.status != QpStatus::kSolved) {
      ++bad;
      continue;
    }
    worst_large = std::max(worst_large, std::abs(sol.objective - ref.objective) /
                                            std::max(1.0, std::abs(ref.objective)));
  }
  return {bad == 0 && worst_small <= 1e-6 && worst_large <= 1e-5,
          "objective error " + sci(worst_small) + " <= 1e-6 (200 QPs, dim <= 8), " +
              sci(worst_large) + " <= 1e-5 (10 QPs, dim <= 24), " + std::to_string(bad) +
              " unsolved"};
}

// 3. collision-cost gradient against central finite differences
Verdict collision_gradient() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-3.0, 3.0), r(0.1, 0.6);
  const PlannerConfig cfg;
  double worst = 0.0;
  int pairs = 0;
  while (pairs < 50) {
    PolyTrajectory prev = PolyTrajectory::stationary({g(rng), g(rng)}, 0.0, cfg.horizon,
                                                     cfg.poly_degree);
    for (int axis = 0; axis < 2; ++axis) {
      prev.coeffs[axis](1) = g(rng);
      prev.coeffs[axis](2) = 0.2 * g(rng);
      prev.coeffs[axis](3) = 0.05 * g(rng);
    }
    std::vector<ObstacleCircle> obs;
    for (int k = 0; k < 4; ++k) obs.push_back({{u(rng), u(rng)}, r(rng)});
    const auto terms = collision_cost_terms(prev, obs, cfg, 0.0, cfg.horizon);
    const Eigen::VectorXd model =
        2.0 * terms.quadratic.hessian * terms.linearization + terms.quadratic.gradient;
    const Eigen::VectorXd fd = oracle::fd_gradient(
        [&](const Eigen::VectorXd& d) { return collision_surrogate(d, terms.quadrature, obs, cfg); },
        terms.linearization, 1e-7);
    if (fd.norm() < 1e-6) continue;  // no obstacle within reach of the samples
    worst = std::max(worst, (model - fd).norm() / fd.norm());
    ++pairs;
  }
  return {worst <= 1e-4, "relative gradient error " + sci(worst) + " <= 1e-4 over 50 pairs"};
}

// 4. shrunk safe regions exclude every inflated peer footprint
Verdict safe_region_soundness() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-6.0, 6.0), r(0.1, 1.0);
  const AlignedBox box{{-8.0, -8.0}, {8.0, 8.0}};
  double worst = 0.0;
  long samples = 0;
  int instances = 0;
  while (instances < 500) {
    const Vec2 ego(u(rng), u(rng));
    const double ego_r = r(rng);
    std::vector<FootprintRegion> peers;
    bool ego_free = true;
    const int count = 1 + static_cast<int>(rng() % 7);
    for (int k = 0; k < count; ++k) {
      const Vec2 c(u(rng), u(rng));
      SizeSpec size;
      size.dims = rng() % 2 ? std::vector<double>{r(rng)} : std::vector<double>{r(rng), r(rng)};
      peers.push_back(inflate_footprint(c, size));
      ego_free = ego_free && !peers.back().contains(ego, 1e-9);
    }
    if (!ego_free) continue;
    ++instances;
    const auto poly = shrink_by_ego(safe_polyhedron(ego, peers, box), ego_r);
    for (const auto& peer : peers) {
      if (!intersects(peer, box)) continue;
      for (int a = 0; a < 72; ++a) {
        const double th = a * 2.0 * std::numbers::pi / 72.0;
        const Vec2 dir(std::cos(th), std::sin(th));
        const Vec2 q = peer.shape == FootprintShape::kSquare
                           ? Vec2(peer.center + peer.extent * dir / dir.cwiseAbs().maxCoeff())
                           : Vec2(peer.center + peer.extent * dir);
        for (int b = 0; b < 24; ++b) {
          const double ph = b * 2.0 * std::numbers::pi / 24.0;
          const Vec2 x = q + ego_r * Vec2(std::cos(ph), std::sin(ph));
          // x must violate (or touch) at least one half-plane
          double best = -kInf;
          for (const auto& hp : poly.halfplanes) best = std::max(best, hp.violation(x));
          worst = std::max(worst, -best);
          ++samples;
        }
      }
    }
  }
  return {worst <= 1e-6, "deepest inside sample " + sci(std::max(worst, 0.0)) +
                             " m <= 1e-6 m over 500 instances, " + std::to_string(samples) +
                             " boundary samples"};
}

// 5. head-on corridor swap
Verdict head_on_swap() {
  const Scenario sc = load_scenario(bundled("corridor_swap_2"));
  int robot_events = 0, missed = 0;
  double min_clear = kInf;
  run_batch(sc, 50, [&](const RunReport& rep) {
    for (const auto& e : rep.events) robot_events += e.kind == CollisionKind::kRobotRobot;
    min_clear = std::min(min_clear, rep.min_robot_clearance);
    for (const auto& r : rep.robots) missed += r.goal_error > 0.1;
  });
  return {robot_events == 0 && min_clear >= -1e-3 && missed == 0,
          std::to_string(robot_events) + " robot-robot events, min separation r1+r2" +
              (min_clear >= 0 ? "+" : "") + sci(min_clear) + " m (>= -1e-3), " +
              std::to_string(missed) + " goals missed by > 0.1 m, 50 seeds"};
}

// 6. intersections
Verdict intersections() {
  std::string detail;
  bool pass = true;
  for (const auto& [name, need] : {std::pair<std::string, double>{"intersection_4", 0.9},
                                   std::pair<std::string, double>{"intersection_8", 0.75}}) {
    const Scenario sc = load_scenario(bundled(name));
    const auto t0 = std::chrono::steady_clock::now();
    int unclassified = 0;
    const BatchReport b = run_batch(sc, 50, [&](const RunReport& rep) {
      unclassified += !rep.success && rep.failure == FailureKind::kNone;
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    pass = pass && b.success_rate() >= need && unclassified == 0 && secs < 600.0;
    std::string tax;
    for (const auto& [k, v] : b.failures) {
      if (k != "none") tax += " " + k + "=" + std::to_string(v);
    }
    if (!detail.empty()) detail += "; ";
    detail += name + " " + sci(b.success_rate()) + " >= " + sci(need) + " in " + sci(secs) +
              " s" + (tax.empty() ? "" : " (" + tax.substr(1) + ")");
  }
  return {pass, detail + ", 50 seeds each, < 600 s each"};
}

// 7. replan wall time with 7 peers, 10 obstacles, 30 region stamps
Verdict replan_budget() {
  const PlannerConfig cfg;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi), rad(1.5, 4.0);
  std::vector<RobotState> peers(7);
  for (int i = 0; i < 7; ++i) {
    const double a = ang(rng), d = rad(rng);
    peers[static_cast<std::size_t>(i)].robot_id = i + 2;
    peers[static_cast<std::size_t>(i)].position = d * Vec2(std::cos(a), std::sin(a));
    peers[static_cast<std::size_t>(i)].velocity = -0.2 * Vec2(std::cos(a), std::sin(a));
  }
  std::vector<ObstacleCircle> obstacles;
  for (int i = 0; i < 10; ++i) {
    const double a = ang(rng), d = rad(rng) + 1.0;
    obstacles.push_back({d * Vec2(std::cos(a), std::sin(a)), 0.3});
  }
  const AlignedBox box{{-10.0, -10.0}, {10.0, 10.0}};
  TrajectoryPlanner planner(cfg);
  RobotState ego;
  ego.robot_id = 1;
  std::optional<PolyTrajectory> current;
  std::vector<double> times;
  int region_steps = 0;
  for (int cycle = 0; cycle < 200; ++cycle) {
    const double now = cycle * cfg.replan_period;
    ego.stamp = now;
    std::vector<RobotState> moved = peers;
    for (auto& p : moved) {
      p.stamp = now;
      p.position += p.velocity * now;
    }
    PlanInputs in;
    in.state = ego;
    in.goal = Vec2(6.0, 1.0);
    in.obstacles = obstacles;
    in.previous = current;
    in.now = now;
    std::vector<PeerPrediction> preds;
    for (const auto& p : moved) preds.push_back(predict_horizon(p, cfg, now));
    const auto t0 = std::chrono::steady_clock::now();
    for (int k = 1; k <= cfg.horizon_steps(); ++k) {
      std::vector<FootprintRegion> fp;
      for (const auto& pr : preds) fp.push_back(pr.samples[static_cast<std::size_t>(k - 1)].region);
      in.regions.push_back(
          shrink_by_ego(safe_polyhedron(ego.position, fp, box, now + k * cfg.tau), 0.3));
    }
    const PlanOutcome out = planner.plan(in);
    times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    region_steps = static_cast<int>(in.regions.size());
    ego = step_robot(ego, out.trajectory, out.status, cfg.replan_period);
    current = out.status == PlanStatus::kFailed ? std::nullopt : std::optional(out.trajectory);
  }
  std::sort(times.begin(), times.end());
  const double median = times[times.size() / 2];
  const double p95 = times[static_cast<std::size_t>(0.95 * static_cast<double>(times.size() - 1))];
  return {median <= 40.0 && p95 <= 80.0 && region_steps == 30,
          "median " + sci(median) + " ms <= 40, p95 " + sci(p95) + " ms <= 80 (200 replans, " +
              std::to_string(region_steps) + " region stamps)"};
}

// 8. raycast + perception round trip on disc-only scenes
Verdict perception_round_trip() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi),
      dist(1.5, 6.0), rad(0.15, 0.8);
  LidarSpec lidar;
  const double q = lidar.range_resolution;
  const PerceptionConfig pcfg;
  int scenes = 0, good = 0, checked = 0;
  double worst_center = 0.0, worst_radius = kInf;
  while (scenes < 100) {
    World w;
    w.bounds = {{-10.0, -10.0}, {10.0, 10.0}};
    const int count = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < count; ++k) {
      const double a = ang(rng), d = dist(rng);
      w.discs.push_back({d * Vec2(std::cos(a), std::sin(a)), rad(rng)});
    }
    // keep discs angularly separated and large enough to subtend 5 beams
    bool ok = true;
    for (std::size_t i = 0; i < w.discs.size() && ok; ++i) {
      const auto& di = w.discs[i];
      const double half_i = std::asin(di.radius / di.center.norm());
      ok = 2.0 * half_i >= 5.0 * lidar.angle_increment();
      for (std::size_t j = 0; j < i && ok; ++j) {
        const auto& dj = w.discs[j];
        const double half_j = std::asin(dj.radius / dj.center.norm());
        double gap = std::abs(std::atan2(di.center.y(), di.center.x()) -
                              std::atan2(dj.center.y(), dj.center.x()));
        gap = std::min(gap, 2.0 * std::numbers::pi - gap);
        ok = gap > half_i + half_j + 10.0 * lidar.angle_increment();
      }
    }
    if (!ok) continue;
    ++scenes;
    const auto scan = raycast_scan(w, {Vec2::Zero(), 0.0}, lidar, 0.0);
    const auto found = scan_to_obstacles(scan, pcfg);
    bool scene_ok = true;
    for (const auto& d : w.discs) {
      ++checked;
      double best = kInf;
      const ObstacleCircle* match = nullptr;
      for (const auto& o : found) {
        const double e = (o.center - d.center).norm();
        if (e < best) {
          best = e;
          match = &o;
        }
      }
      if (!match) {
        scene_ok = false;
        continue;
      }
      worst_center = std::max(worst_center, best);
      worst_radius = std::min(worst_radius, match->radius - d.radius);
      scene_ok = scene_ok && best <= 2.0 * q && match->radius >= d.radius;
    }
    good += scene_ok;
  }
  return {good == scenes, std::to_string(good) + "/" + std::to_string(scenes) +
                              " scenes, worst center error " + sci(worst_center) +
                              " m <= 2 steps of " + sci(q) + " m, min radius margin " +
                              sci(worst_radius) + " m >= 0 (" + std::to_string(checked) + " discs)"};
}

// 9. fallback chain order
Verdict fallback_chain() {
  const Scenario sc = load_scenario(bundled("fallback_demo"));
  const RunReport rep = run_scenario(sc, 0);
  const std::vector<std::string> chain{"optimal", "reused_previous", "relaxed_dynamics", "failed"};
  int reused = 0, relaxed = 0, failed = 0, malformed = 0;
  for (const auto& c : rep.cycles) {
    std::vector<std::string> parts;
    std::stringstream ss(c.attempts);
    for (std::string p; std::getline(ss, p, '|');) parts.push_back(p);
    bool ok = !parts.empty() && parts.size() <= chain.size();
    for (std::size_t i = 0; ok && i < parts.size(); ++i) {
      const std::string want =
          chain[i] + (i + 1 == parts.size() ? ":accepted" : ":rejected");
      ok = parts[i] == want;
    }
    ok = ok && chain[parts.size() - 1] == to_string(c.status);
    malformed += !ok;
    reused += c.status == PlanStatus::kReusedPrevious;
    relaxed += c.status == PlanStatus::kRelaxedDynamics;
    failed += c.status == PlanStatus::kFailed;
  }
  return {malformed == 0 && reused > 0 && relaxed > 0 && failed > 0,
          std::to_string(reused) + " reused_previous, " + std::to_string(relaxed) +
              " relaxed_dynamics, " + std::to_string(failed) + " failed cycles; " +
              std::to_string(malformed) + " of " + std::to_string(rep.cycles.size()) +
              " attempt logs out of order"};
}

// 10. byte-identical logs for the same seed
Verdict determinism() {
  const Scenario sc = load_scenario(bundled("intersection_4"));
  const fs::path base = fs::temp_directory_path() / "dmtraj_acceptance_determinism";
  fs::remove_all(base);
  write_run_outputs(run_scenario(sc, 5), sc, base / "a");
  write_run_outputs(run_scenario(sc, 5), sc, base / "b");
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool same = true;
  std::size_t bytes = 0;
  for (const char* f : {"trajectories.csv", "events.csv"}) {
    const auto a = slurp(base / "a" / f);
    same = same && !a.empty() && a == slurp(base / "b" / f);
    bytes += a.size();
  }
  fs::remove_all(base);
  return {same, std::string(same ? "identical" : "different") +
                    " trajectories.csv and events.csv (" + std::to_string(bytes) +
                    " bytes, intersection_4 seed 5)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"quadrature oracle", quadrature_oracle},
      {"qp oracle", qp_oracle},
      {"collision-cost gradient", collision_gradient},
      {"safe-region soundness", safe_region_soundness},
      {"head-on swap", head_on_swap},
      {"intersections", intersections},
      {"replan budget", replan_budget},
      {"perception round trip", perception_round_trip},
      {"fallback chain", fallback_chain},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !v.pass;
    std::printf("%s %2zu %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
