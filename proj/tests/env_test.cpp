#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "uavcov/env.hpp"
#include "uavcov/errors.hpp"

namespace uavcov::env {
namespace {

WorldState make_state(std::vector<Vec2> uavs, std::vector<Vec2> vels, std::vector<Vec2> terminals) {
  WorldState s;
  s.uav_pos = std::move(uavs);
  s.uav_vel = std::move(vels);
  s.terminal_pos = std::move(terminals);
  return s;
}

TEST(DecodeAction, ZeroIsNoAcceleration) {
  EXPECT_EQ(decode_action(EnvConfig{}, 0), (Vec2{0.0, 0.0}));
}

TEST(DecodeAction, LowMagnitudeEast) {
  const Vec2 a = decode_action(EnvConfig{}, 1);
  EXPECT_DOUBLE_EQ(a.x, 0.5);
  EXPECT_DOUBLE_EQ(a.y, 0.0);
}

TEST(DecodeAction, HighMagnitudeNorthEast) {
  const Vec2 a = decode_action(EnvConfig{}, 10);
  EXPECT_NEAR(a.x, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(a.y, 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(DecodeAction, CompassOrderAndMagnitudes) {
  const EnvConfig cfg;
  const double expected_angles[8] = {0, 45, 90, 135, 180, 225, 270, 315};
  for (int k = 0; k < 8; ++k) {
    const Vec2 low = decode_action(cfg, 1 + k);
    const Vec2 high = decode_action(cfg, 9 + k);
    EXPECT_NEAR(low.norm(), cfg.accel_low, 1e-12);
    EXPECT_NEAR(high.norm(), cfg.accel_high, 1e-12);
    const double angle = std::fmod(std::atan2(low.y, low.x) * 180.0 / M_PI + 360.0, 360.0);
    EXPECT_NEAR(angle, expected_angles[k], 1e-9) << "action " << 1 + k;
  }
}

TEST(DecodeAction, OutOfRangeThrows) {
  EXPECT_THROW(decode_action(EnvConfig{}, -1), ContractViolation);
  EXPECT_THROW(decode_action(EnvConfig{}, 17), ContractViolation);
}

TEST(EnvConfig, RejectsBadRadiusOrdering) {
  EnvConfig cfg;
  cfg.sensing_radius = 40;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg = EnvConfig{};
  cfg.episode_len = 0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
}

TEST(EnvConfig, ObservationWidth) {
  const EnvConfig cfg;
  EXPECT_EQ(cfg.obs_dim(), 10 + 42 + 3 * (15 + 5));
}

TEST(ComputeReward, NothingCoveredWhileHovering) {
  EnvConfig cfg;
  const auto s = make_state({{10, 10}}, {{0, 0}}, {{100, 100}});
  EXPECT_DOUBLE_EQ(compute_reward(cfg, s)[0], -2.0);
}

TEST(ComputeReward, SharedCoverageWhileHovering) {
  // UAV 0 covers 4 terminals; UAV 1 covers 6 more; total 10.
  EnvConfig cfg;
  std::vector<Vec2> terminals;
  for (int k = 0; k < 4; ++k) terminals.push_back({10.0 + k, 10.0});
  for (int k = 0; k < 6; ++k) terminals.push_back({100.0 + k, 100.0});
  const auto s = make_state({{10, 10}, {100, 100}}, {{0, 0}, {0, 0}}, terminals);
  EXPECT_NEAR(compute_reward(cfg, s)[0], 9.2, 1e-12);
}

TEST(ComputeReward, SoleCoverageAtFullSpeed) {
  EnvConfig cfg;
  const auto s = make_state({{50, 50}}, {{2.0, 0.0}}, {{50, 50}, {51, 50}, {50, 52}});
  EXPECT_DOUBLE_EQ(compute_reward(cfg, s)[0], 3.0);
}

TEST(ComputeReward, BoundaryTerminalCounts) {
  EnvConfig cfg;
  const auto s = make_state({{50, 50}}, {{0, 0}}, {{65, 50}});
  EXPECT_EQ(count_coverage(cfg, s).per_uav[0], 1);
}

TEST(IsConnected, IdentityIsDisconnected) { EXPECT_FALSE(is_connected(AdjacencyMatrix(3))); }

TEST(IsConnected, CompleteGraph) { EXPECT_TRUE(is_connected(AdjacencyMatrix::complete(5))); }

TEST(IsConnected, Chain) {
  AdjacencyMatrix a(3);
  a.link(0, 1);
  a.link(1, 2);
  EXPECT_TRUE(is_connected(a));
}

TEST(IsConnected, MatchesClosureOracleOnRandomGraphs) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 9;
    AdjacencyMatrix a(n);
    std::bernoulli_distribution edge(0.25);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (edge(rng)) a.link(i, j);
    EXPECT_EQ(is_connected(a), oracle::connected_by_closure(a));
  }
}

TEST(BuildObservation, OriginHasZeroPositionBits) {
  EnvConfig cfg;
  const auto s = make_state({{0, 0}, {5, 5}}, {{0, 0}, {0, 0}}, {{150, 150}});
  cfg.n_uavs = 2;
  const Observation o = build_observation(cfg, s, 0);
  ASSERT_EQ(static_cast<int>(o.size()), cfg.obs_dim());
  for (int b = 0; b < 40; ++b) EXPECT_EQ(o.values[static_cast<std::size_t>(2 + b)], 0.0);
}

TEST(BuildObservation, FarEdgeUsesTopBin) {
  EnvConfig cfg;
  cfg.n_uavs = 1;
  const auto s = make_state({{cfg.world_size, cfg.world_size}}, {{0, 0}}, {{0, 0}});
  const Observation o = build_observation(cfg, s, 0);
  for (int b = 0; b < 40; ++b) EXPECT_EQ(o.values[static_cast<std::size_t>(1 + b)], 1.0);
}

TEST(BuildObservation, BitsAreLeastSignificantFirst) {
  EnvConfig cfg;
  cfg.n_uavs = 1;
  // x bin = floor(3 / 200 * 2^20) = 15728 = 0b11110101110000
  const auto s = make_state({{3.0, 0.0}}, {{0, 0}}, {{150, 150}});
  const Observation o = build_observation(cfg, s, 0);
  const std::uint64_t bin = static_cast<std::uint64_t>(std::floor(3.0 / 200.0 * 1048576.0));
  for (int b = 0; b < 20; ++b)
    EXPECT_EQ(o.values[static_cast<std::size_t>(1 + b)], static_cast<double>((bin >> b) & 1U)) << "bit " << b;
}

TEST(BuildObservation, NoTerminalInRangeGivesZeroSlots) {
  EnvConfig cfg;
  cfg.n_uavs = 1;
  const auto s = make_state({{10, 10}}, {{0, 0}}, {{150, 150}});
  const Observation o = build_observation(cfg, s, 0);
  const std::size_t start = 1 + 40 + 2;
  for (std::size_t k = start; k < start + 3 * 15; ++k) EXPECT_EQ(o.values[k], 0.0);
}

TEST(BuildObservation, TerminalAtAgentIsFirstSlot) {
  EnvConfig cfg;
  cfg.n_uavs = 1;
  const auto s = make_state({{40, 40}}, {{1.0, -2.0}}, {{50, 40}, {40, 40}});
  const Observation o = build_observation(cfg, s, 0);
  const std::size_t start = 1 + 40 + 2;
  EXPECT_EQ(o.values[start], 0.0);
  EXPECT_EQ(o.values[start + 1], 0.0);
  EXPECT_EQ(o.values[start + 2], 1.0);
  EXPECT_DOUBLE_EQ(o.values[start + 3], 10.0 / 19.0);
  EXPECT_EQ(o.values[start + 5], 1.0);
  EXPECT_DOUBLE_EQ(o.values[41], 0.5);
  EXPECT_DOUBLE_EQ(o.values[42], -1.0);
}

TEST(BuildObservation, NeighborsNearestFirstAndExcludeSelf) {
  EnvConfig cfg;
  cfg.n_uavs = 4;
  const auto s = make_state({{50, 50}, {70, 50}, {50, 40}, {150, 150}}, {{0, 0}, {0, 0}, {0, 0}, {0, 0}}, {{0, 0}});
  const Observation o = build_observation(cfg, s, 0);
  const std::size_t start = 4 + 40 + 2 + 3 * 15;
  EXPECT_DOUBLE_EQ(o.values[start + 0], 0.0);
  EXPECT_DOUBLE_EQ(o.values[start + 1], -10.0 / 30.0);
  EXPECT_EQ(o.values[start + 2], 1.0);
  EXPECT_DOUBLE_EQ(o.values[start + 3], 20.0 / 30.0);
  EXPECT_EQ(o.values[start + 5], 1.0);
  for (std::size_t k = start + 6; k < start + 15; ++k) EXPECT_EQ(o.values[k], 0.0);
}

TEST(Reset, SingleUav) {
  EnvConfig cfg;
  cfg.n_uavs = 1;
  Environment env(cfg);
  const auto r = env.reset(3);
  EXPECT_EQ(r.adj, AdjacencyMatrix(1));
  EXPECT_TRUE(is_connected(r.adj));
}

TEST(Reset, ConnectedAndDeterministic) {
  Environment a(EnvConfig{});
  Environment b(EnvConfig{});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto ra = a.reset(seed);
    const auto rb = b.reset(seed);
    EXPECT_TRUE(is_connected(ra.adj));
    EXPECT_EQ(a.state(), b.state());
    EXPECT_EQ(ra.obs, rb.obs);
    for (const auto& v : a.state().uav_vel) EXPECT_EQ(v, (Vec2{0, 0}));
    EXPECT_EQ(a.state().step, 0);
  }
}

TEST(Step, HoverKeepsPositionsAndHalfEnergy) {
  Environment env(EnvConfig{});
  env.reset(11);
  const auto before = env.state().uav_pos;
  const std::vector<int> actions(10, 0);
  const StepOutcome out = env.step(actions);
  EXPECT_EQ(env.state().uav_pos, before);
  for (double e : out.energy) EXPECT_EQ(e, 0.5);
  EXPECT_EQ(out.energy_index, 0.5);
}

TEST(Step, FullSpeedCostsUnitEnergy) {
  EnvConfig cfg;
  cfg.n_uavs = 1;
  Environment env(cfg);
  env.reset(1);
  WorldState s = env.state();
  s.uav_pos[0] = {100, 100};
  s.uav_vel[0] = {cfg.max_speed, 0.0};
  env.set_state(s);
  const StepOutcome out = env.step(std::vector<int>{1});
  EXPECT_EQ(out.energy[0], 1.0);
  EXPECT_NEAR(env.state().uav_vel[0].norm(), cfg.max_speed, 1e-12);
}

TEST(Step, BoundaryClampZeroesVelocity) {
  EnvConfig cfg;
  cfg.n_uavs = 1;
  Environment env(cfg);
  env.reset(1);
  WorldState s = env.state();
  s.uav_pos[0] = {cfg.world_size, 100};
  s.uav_vel[0] = {1.0, 0.5};
  env.set_state(s);
  env.step(std::vector<int>{1});
  EXPECT_EQ(env.state().uav_pos[0].x, cfg.world_size);
  EXPECT_EQ(env.state().uav_vel[0].x, 0.0);
  EXPECT_EQ(env.state().uav_vel[0].y, 0.5);
  EXPECT_EQ(env.state().uav_pos[0].y, 100.5);
}

TEST(Step, FinishedEpisodeThrows) {
  EnvConfig cfg;
  cfg.episode_len = 2;
  Environment env(cfg);
  env.reset(0);
  const std::vector<int> a(10, 0);
  EXPECT_FALSE(env.step(a).done);
  EXPECT_TRUE(env.step(a).done);
  EXPECT_THROW(env.step(a), ContractViolation);
}

TEST(Step, WrongActionCountThrows) {
  Environment env(EnvConfig{});
  env.reset(0);
  EXPECT_THROW(env.step(std::vector<int>{0, 0}), ContractViolation);
}

TEST(Step, ConnectivityPenaltyOnlyWhenDisconnected) {
  EnvConfig cfg;
  cfg.n_uavs = 2;
  cfg.connectivity_penalty = 3.0;
  Environment env(cfg);
  env.reset(0);
  WorldState s = env.state();
  s.uav_pos = {{10, 10}, {150, 150}};
  env.set_state(s);
  const StepOutcome out = env.step(std::vector<int>{0, 0});
  EXPECT_FALSE(out.connected);
  const auto base = compute_reward(cfg, env.state());
  EXPECT_DOUBLE_EQ(out.rewards[0], base[0] - 3.0);
  EXPECT_DOUBLE_EQ(out.rewards[1], base[1] - 3.0);
}

TEST(Coverage, FullAndEmpty) {
  EnvConfig cfg;
  cfg.n_uavs = 2;
  cfg.n_terminals = 6;
  Environment env(cfg);
  env.reset(0);
  WorldState s = env.state();
  s.uav_pos = {{30, 30}, {50, 30}};
  s.terminal_pos = {{30, 30}, {35, 35}, {25, 20}, {50, 30}, {60, 30}, {50, 44}};
  env.set_state(s);
  EXPECT_EQ(env.step(std::vector<int>{0, 0}).coverage_index, 1.0);

  s.step = 0;
  s.terminal_pos = {{150, 150}, {190, 10}, {10, 190}, {100, 100}, {120, 80}, {199, 199}};
  env.set_state(s);
  EXPECT_EQ(env.step(std::vector<int>{0, 0}).coverage_index, 0.0);
}

TEST(Coverage, MatchesPairwiseOracle) {
  EnvConfig cfg;
  Environment env(cfg);
  Rng rng(2);
  std::uniform_int_distribution<int> pick(0, kNumActions - 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    env.reset(seed);
    for (int t = 0; t < 30; ++t) {
      std::vector<int> actions(10);
      for (auto& a : actions) a = pick(rng);
      const StepOutcome out = env.step(actions);
      const auto ref = oracle::coverage(env.state().uav_pos, env.state().terminal_pos, cfg.coverage_radius);
      EXPECT_EQ(static_cast<int>(out.covered_terminals.size()), ref.total);
      EXPECT_EQ(count_coverage(cfg, env.state()).per_uav, ref.per_uav);
      int sum = 0;
      for (int c : ref.per_uav) sum += c;
      EXPECT_LE(ref.total, sum);
    }
  }
}

}  // namespace
}  // namespace uavcov::env
