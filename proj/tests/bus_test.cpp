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

#include "dmtraj/bus.hpp"

#include <gtest/gtest.h>

#include <random>

namespace dmtraj {
namespace {

RobotState state(int id, double stamp, double x = 0.0) {
  RobotState s;
  s.robot_id = id;
  s.stamp = stamp;
  s.position = Vec2(x, 0.0);
  return s;
}

TEST(Bus, DefaultsAreValid) {
  const BusConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.broadcast_period, 0.05);
  EXPECT_DOUBLE_EQ(cfg.latency, 0.01);
  EXPECT_DOUBLE_EQ(cfg.drop_probability, 0.0);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Bus, DeliveryWaitsForLatency) {
  MessageBus bus({0.05, 0.05, 0.0, 1});
  bus.broadcast(state(2, 0.0), 0.0);
  EXPECT_TRUE(bus.latest_states(1, 0.04).empty());
  const auto got = bus.latest_states(1, 0.05);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].robot_id, 2);
}

TEST(Bus, DropProbabilityOneNeverDelivers) {
  MessageBus bus({0.05, 0.0, 1.0, 1});
  for (int k = 0; k < 20; ++k) bus.broadcast(state(2, 0.05 * k), 0.05 * k);
  EXPECT_TRUE(bus.latest_states(1, 10.0).empty());
}

TEST(Bus, DropProbabilityZeroAlwaysDelivers) {
  MessageBus bus({0.05, 0.0, 0.0, 1});
  for (int k = 0; k < 20; ++k) {
    bus.broadcast(state(2, 0.05 * k), 0.05 * k);
    const auto got = bus.latest_states(1, 0.05 * k);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_DOUBLE_EQ(got[0].stamp, 0.05 * k);
  }
}

TEST(Bus, LatestStampWins) {
  MessageBus bus({0.05, 0.0, 0.0, 1});
  bus.broadcast(state(2, 0.0, 1.0), 0.0);
  bus.broadcast(state(2, 0.2, 2.0), 0.2);
  const auto got = bus.latest_states(1, 0.3);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_DOUBLE_EQ(got[0].stamp, 0.2);
  EXPECT_DOUBLE_EQ(got[0].position.x(), 2.0);
}

TEST(Bus, EmptyBeforeFirstDelivery) {
  MessageBus bus;
  EXPECT_TRUE(bus.latest_states(1, 0.0).empty());
}

TEST(Bus, SelfMessagesExcluded) {
  MessageBus bus({0.05, 0.0, 0.0, 1});
  bus.broadcast(state(1, 0.0), 0.0);
  bus.broadcast(state(3, 0.0), 0.0);
  bus.broadcast(state(2, 0.0), 0.0);
  const auto got = bus.latest_states(1, 1.0);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].robot_id, 2);
  EXPECT_EQ(got[1].robot_id, 3);
}

TEST(Bus, NeverGoesBackInTime) {
  // out-of-order delivery: the later message arrives first
  MessageBus bus({0.05, 0.0, 0.0, 1});
  bus.broadcast(state(2, 0.3), 0.3);
  EXPECT_DOUBLE_EQ(bus.latest_states(1, 0.3)[0].stamp, 0.3);
  bus.broadcast(state(2, 0.1), 0.1);
  EXPECT_DOUBLE_EQ(bus.latest_states(1, 0.4)[0].stamp, 0.3);
}

TEST(Bus, MonotoneUnderRandomDrops) {
  MessageBus bus({0.05, 0.02, 0.4, 9});
  double last = -1.0;
  for (int k = 0; k < 400; ++k) {
    const double t = 0.01 * k;
    if (k % 5 == 0) bus.broadcast(state(2, t), t);
    const auto got = bus.latest_states(1, t);
    if (got.empty()) continue;
    EXPECT_GE(got[0].stamp, last);
    last = got[0].stamp;
  }
  EXPECT_GT(last, 0.0);
}

TEST(Bus, StalenessBoundWithoutDrops) {
  const BusConfig cfg{0.05, 0.01, 0.0, 3};
  MessageBus bus(cfg);
  double next = 0.0;
  for (int k = 0; k <= 500; ++k) {
    const double t = 0.004 * k;
    if (t + 1e-12 >= next) {
      bus.broadcast(state(2, t), t);
      next += cfg.broadcast_period;
    }
    if (t < cfg.latency) continue;
    const auto got = bus.latest_states(1, t);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_LE(t - got[0].stamp, cfg.broadcast_period + cfg.latency + 1e-9);
  }
}

TEST(Bus, SameSeedSameDrops) {
  auto trace = [](std::uint64_t seed) {
    MessageBus bus({0.05, 0.0, 0.5, seed});
    std::vector<double> seen;
    for (int k = 0; k < 100; ++k) {
      bus.broadcast(state(2, 0.05 * k), 0.05 * k);
      const auto got = bus.latest_states(1, 0.05 * k);
      seen.push_back(got.empty() ? -1.0 : got[0].stamp);
    }
    return seen;
  };
  EXPECT_EQ(trace(4), trace(4));
  EXPECT_NE(trace(4), trace(5));
}

TEST(Bus, RejectsBadConfig) {
  EXPECT_THROW(MessageBus({0.0, 0.0, 0.0, 0}), ValidationError);
  EXPECT_THROW(MessageBus({0.05, -1.0, 0.0, 0}), ValidationError);
  EXPECT_THROW(MessageBus({0.05, 0.0, 1.5, 0}), ValidationError);
}

}  // namespace
}  // namespace dmtraj
