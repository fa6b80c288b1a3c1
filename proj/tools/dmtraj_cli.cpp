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


// Command line front end: run, batch and validate scenario files.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "dmtraj/runner.hpp"
#include "dmtraj/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitFailures = 3;

// Accepts a path or the name of a bundled scenario.
std::string resolve(const std::string& arg) {
  namespace fs = std::filesystem;
  if (fs::exists(arg)) return arg;
  const fs::path bundled = fs::path(DMTRAJ_SCENARIO_DIR) / (arg + ".yaml");
  if (fs::exists(bundled)) return bundled.string();
  return arg;
}

void print_summary(const dmtraj::RunReport& rep) {
  std::cout << "seed " << rep.seed << ": " << (rep.success ? "success" : "failure")
            << " (" << to_string(rep.failure) << "), events " << rep.events.size()
            << ", end time " << dmtraj::fmt(rep.end_time, 2) << " s, min clearance "
            << dmtraj::fmt(rep.min_robot_clearance, 4) << " m\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized multi-robot trajectory planning simulator"};
  app.require_subcommand(1);

  std::string scenario_arg;
  std::string out_dir;
  std::uint64_t seed = 0;
  int n_seeds = 1;

  auto* run = app.add_subcommand("run", "Run one scenario and write its logs");
  run->add_option("scenario", scenario_arg, "Scenario file or bundled name")->required();
  run->add_option("--out", out_dir, "Output directory");
  auto* seed_opt = run->add_option("--seed", seed, "Spawn and bus seed (default: scenario seed)");

  auto* batch = app.add_subcommand("batch", "Run seeds 0..N-1 and report the success rate");
  batch->add_option("scenario", scenario_arg, "Scenario file or bundled name")->required();
  batch->add_option("--seeds", n_seeds, "Number of seeds")->required()->check(CLI::PositiveNumber);
  batch->add_option("--out", out_dir, "Directory for batch.json");

  auto* validate = app.add_subcommand("validate", "Check a scenario file against the schema");
  validate->add_option("scenario", scenario_arg, "Scenario file or bundled name")->required();

  CLI11_PARSE(app, argc, argv);

  dmtraj::Scenario sc;
  try {
    sc = dmtraj::load_scenario(resolve(scenario_arg));
  } catch (const dmtraj::ValidationError& e) {
    std::cerr << "invalid scenario: " << e.what() << '\n';
    return kExitInvalid;
  }

  if (*validate) {
    std::cout << sc.name << ": ok (" << sc.robots.size() << " robots, " << sc.world.walls.size()
              << " walls, " << sc.world.discs.size() << " discs)\n";
    return kExitOk;
  }

  if (*run) {
    if (!*seed_opt) seed = sc.seed;
    const auto rep = dmtraj::run_scenario(sc, seed);
    const std::filesystem::path dir =
        out_dir.empty() ? std::filesystem::path("runs") / (sc.name + "_seed" + std::to_string(seed))
                        : std::filesystem::path(out_dir);
    dmtraj::write_run_outputs(rep, sc, dir);
    print_summary(rep);
    std::cout << "logs written to " << dir.string() << '\n';
    return rep.success ? kExitOk : kExitFailures;
  }

  const auto b = dmtraj::run_batch(sc, n_seeds, [](const dmtraj::RunReport& r) { print_summary(r); });
  std::cout << sc.name << ": success rate " << dmtraj::fmt(b.success_rate(), 3) << " ("
            << b.successes << "/" << b.runs << ")\n";
  for (const auto& [kind, count] : b.failures) std::cout << "  " << kind << ": " << count << '\n';
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(std::filesystem::path(out_dir) / "batch.json") << dmtraj::batch_json(b).dump(2)
                                                                   << '\n';
  }
  return b.successes == b.runs ? kExitOk : kExitFailures;
}
