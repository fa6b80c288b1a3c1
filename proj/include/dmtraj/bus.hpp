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


// In-process broadcast channel for robot states with latency and seeded
// message loss.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <vector>

#include "dmtraj/core.hpp"

namespace dmtraj {

struct BusConfig {
  double broadcast_period = 0.05;
  double latency = 0.01;
  double drop_probability = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(broadcast_period > 0.0) || !std::isfinite(broadcast_period)) {
      throw ValidationError("broadcast_period: must be positive");
    }
    if (!(latency >= 0.0) || !std::isfinite(latency)) {
      throw ValidationError("latency: must be non-negative");
    }
    if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
      throw ValidationError("drop_probability: must lie in [0, 1]");
    }
  }
};

class MessageBus {
 public:
  explicit MessageBus(BusConfig cfg = {}) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

  const BusConfig& config() const { return cfg_; }

  void broadcast(const RobotState& msg, double send_time) {
    msg.validate();
    std::lock_guard<std::mutex> lock(mu_);
    // always draw so the random stream does not depend on the drop rate
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (u < cfg_.drop_probability) return;
    auto& slot = store_[msg.robot_id];
    slot.push_back({send_time + cfg_.latency, msg});
    if (slot.size() > kKeep) slot.erase(slot.begin());
  }

  /// Newest delivered state of every peer, ordered by robot id.
  std::vector<RobotState> latest_states(int receiver_id, double now) {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<RobotState> out;
    auto& seen = seen_[receiver_id];
    for (const auto& [sender, slot] : store_) {
      if (sender == receiver_id) continue;
      const RobotState* best = nullptr;
      for (const auto& m : slot) {
        if (m.deliver_at <= now && (!best || m.state.stamp > best->stamp)) best = &m.state;
      }
      auto it = seen.find(sender);
      if (best && (it == seen.end() || best->stamp > it->second.stamp)) {
        seen[sender] = *best;
        it = seen.find(sender);
      }
      if (it != seen.end()) out.push_back(it->second);
    }
    return out;
  }

 private:
  static constexpr std::size_t kKeep = 2;

  struct Message {
    double deliver_at = 0.0;
    RobotState state;
  };

  BusConfig cfg_;
  std::mt19937_64 rng_;
  std::mutex mu_;
  std::map<int, std::vector<Message>> store_;
  std::map<int, std::map<int, RobotState>> seen_;  // receiver -> sender -> last returned
};

}  // namespace dmtraj
