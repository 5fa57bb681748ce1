#include "uavcov/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <string>

#include "uavcov/errors.hpp"

namespace uavcov {

bool is_connected(const AdjacencyMatrix& adj) {
  const std::size_t n = adj.size();
  if (n == 0) return true;
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> frontier{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop_front();
    for (std::size_t v = 0; v < n; ++v) {
      if (!seen[v] && adj.linked(u, v)) {
        seen[v] = true;
        ++reached;
        frontier.push_back(v);
      }
    }
  }
  return reached == n;
}

}  // namespace uavcov

namespace uavcov::env {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// E, NE, N, NW, W, SW, S, SE
constexpr std::array<Vec2, 8> kCompass = {{
    {1.0, 0.0},
    {kInvSqrt2, kInvSqrt2},
    {0.0, 1.0},
    {-kInvSqrt2, kInvSqrt2},
    {-1.0, 0.0},
    {-kInvSqrt2, -kInvSqrt2},
    {0.0, -1.0},
    {kInvSqrt2, -kInvSqrt2},
}};

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

double Vec2::norm() const { return std::hypot(x, y); }

double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

void EnvConfig::validate() const {
  require(world_size > 0, "world_size must be positive");
  require(n_uavs > 0, "n_uavs must be positive");
  require(n_terminals > 0, "n_terminals must be positive");
  require(coverage_radius > 0 && sensing_radius > 0 && comm_radius > 0,
          "radii must be positive");
  require(coverage_radius < sensing_radius && sensing_radius < comm_radius,
          "radii must satisfy coverage < sensing < comm");
  require(episode_len >= 1, "episode_len must be at least 1");
  require(max_speed > 0, "max_speed must be positive");
  require(accel_low > 0 && accel_high > 0, "accelerations must be positive");
  require(terminal_slots > 0 && neighbor_slots > 0, "slot counts must be positive");
  require(pos_bits >= 1 && pos_bits <= 52, "pos_bits must be in [1, 52]");
  require(group_reward_coeff >= 0, "group_reward_coeff must be nonnegative");
  require(connectivity_penalty >= 0, "connectivity_penalty must be nonnegative");
}

Vec2 decode_action(const EnvConfig& cfg, int action_id) {
  if (action_id < 0 || action_id >= kNumActions)
    throw ContractViolation("action id " + std::to_string(action_id) + " outside [0, 16]");
  if (action_id == 0) return {0.0, 0.0};
  const int dir = (action_id - 1) % 8;
  const double magnitude = action_id <= 8 ? cfg.accel_low : cfg.accel_high;
  return magnitude * kCompass[dir];
}

double energy_of(const EnvConfig& cfg, double speed) {
  const double ratio = std::clamp(speed / cfg.max_speed, 0.0, 1.0);
  return 0.5 + 0.5 * ratio;
}

CoverageCount count_coverage(const EnvConfig& cfg, const WorldState& state) {
  CoverageCount out;
  out.per_uav.assign(state.uav_pos.size(), 0);
  for (std::size_t t = 0; t < state.terminal_pos.size(); ++t) {
    bool any = false;
    for (std::size_t i = 0; i < state.uav_pos.size(); ++i) {
      if (distance(state.uav_pos[i], state.terminal_pos[t]) <= cfg.coverage_radius) {
        ++out.per_uav[i];
        any = true;
      }
    }
    if (any) out.covered_ids.push_back(static_cast<int>(t));
  }
  return out;
}

double reward_from_counts(const EnvConfig& cfg, int individual_covered, int total_covered,
                          double energy) {
  const double individual = individual_covered == 0 ? -1.0 : static_cast<double>(individual_covered);
  const double group = cfg.group_reward_coeff * static_cast<double>(total_covered - individual_covered);
  return (individual + group) / energy;
}

std::vector<double> compute_reward(const EnvConfig& cfg, const WorldState& state) {
  const CoverageCount cov = count_coverage(cfg, state);
  std::vector<double> rewards(state.uav_pos.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    rewards[i] = reward_from_counts(cfg, cov.per_uav[i], cov.total(),
                                    energy_of(cfg, state.uav_vel[i].norm()));
  }
  return rewards;
}

AdjacencyMatrix build_adjacency(const EnvConfig& cfg, const WorldState& state) {
  const std::size_t n = state.uav_pos.size();
  AdjacencyMatrix adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (distance(state.uav_pos[i], state.uav_pos[j]) <= cfg.comm_radius) adj.link(i, j);
  return adj;
}

namespace {

void append_bits(std::vector<double>& out, double coord, const EnvConfig& cfg) {
  const std::uint64_t levels = std::uint64_t{1} << cfg.pos_bits;
  const double scaled = std::floor(coord / cfg.world_size * static_cast<double>(levels));
  const auto bin = static_cast<std::uint64_t>(
      std::clamp(scaled, 0.0, static_cast<double>(levels - 1)));
  for (int b = 0; b < cfg.pos_bits; ++b) out.push_back(static_cast<double>((bin >> b) & 1U));
}

// Nearest-first (ties broken by index) offsets of the points within `radius`.
void append_slots(std::vector<double>& out, Vec2 origin, std::span<const Vec2> points,
                  int skip, double radius, int slots) {
  std::vector<std::pair<double, int>> hits;
  for (int k = 0; k < static_cast<int>(points.size()); ++k) {
    if (k == skip) continue;
    const double d = distance(origin, points[k]);
    if (d <= radius) hits.emplace_back(d, k);
  }
  std::sort(hits.begin(), hits.end());
  for (int s = 0; s < slots; ++s) {
    if (s < static_cast<int>(hits.size())) {
      const Vec2 delta = points[hits[s].second] - origin;
      out.push_back(delta.x / radius);
      out.push_back(delta.y / radius);
      out.push_back(1.0);
    } else {
      out.insert(out.end(), {0.0, 0.0, 0.0});
    }
  }
}

}  // namespace

Observation build_observation(const EnvConfig& cfg, const WorldState& state, int agent) {
  require(agent >= 0 && agent < static_cast<int>(state.uav_pos.size()), "agent index out of range");
  Observation obs;
  obs.values.reserve(static_cast<std::size_t>(cfg.obs_dim()));
  for (int i = 0; i < cfg.n_uavs; ++i) obs.values.push_back(i == agent ? 1.0 : 0.0);
  const Vec2 p = state.uav_pos[agent];
  append_bits(obs.values, p.x, cfg);
  append_bits(obs.values, p.y, cfg);
  obs.values.push_back(state.uav_vel[agent].x / cfg.max_speed);
  obs.values.push_back(state.uav_vel[agent].y / cfg.max_speed);
  append_slots(obs.values, p, state.terminal_pos, -1, cfg.sensing_radius, cfg.terminal_slots);
  append_slots(obs.values, p, state.uav_pos, agent, cfg.comm_radius, cfg.neighbor_slots);
  return obs;
}

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Environment::ResetResult Environment::reset(std::uint64_t seed) {
  WorldState s;
  s.rng.seed(seed);
  const double w = cfg_.world_size;
  s.terminal_pos.reserve(static_cast<std::size_t>(cfg_.n_terminals));
  for (int t = 0; t < cfg_.n_terminals; ++t) {
    const double x = uniform(s.rng, 0.0, w);
    s.terminal_pos.push_back({x, uniform(s.rng, 0.0, w)});
  }

  // Each UAV after the first lands within comm_radius of an already placed
  // one, so the initial link graph is connected.
  s.uav_pos.reserve(static_cast<std::size_t>(cfg_.n_uavs));
  {
    const double x = uniform(s.rng, 0.0, w);
    s.uav_pos.push_back({x, uniform(s.rng, 0.0, w)});
  }
  const double r = cfg_.comm_radius;
  while (static_cast<int>(s.uav_pos.size()) < cfg_.n_uavs) {
    const auto anchor_idx =
        std::uniform_int_distribution<std::size_t>(0, s.uav_pos.size() - 1)(s.rng);
    const Vec2 anchor = s.uav_pos[anchor_idx];
    for (;;) {
      const double dx = uniform(s.rng, -r, r);
      const double dy = uniform(s.rng, -r, r);
      const Vec2 cand{anchor.x + dx, anchor.y + dy};
      if (std::hypot(dx, dy) > r) continue;
      if (cand.x < 0.0 || cand.x > w || cand.y < 0.0 || cand.y > w) continue;
      s.uav_pos.push_back(cand);
      break;
    }
  }
  s.uav_vel.assign(static_cast<std::size_t>(cfg_.n_uavs), Vec2{});
  s.step = 0;
  state_ = std::move(s);
  return {observe(), build_adjacency(cfg_, state_)};
}

std::vector<Observation> Environment::observe() const {
  std::vector<Observation> out;
  out.reserve(state_.uav_pos.size());
  for (int i = 0; i < static_cast<int>(state_.uav_pos.size()); ++i)
    out.push_back(build_observation(cfg_, state_, i));
  return out;
}

StepOutcome Environment::step(std::span<const int> actions) {
  if (state_.step >= cfg_.episode_len)
    throw ContractViolation("step called on a finished episode");
  if (actions.size() != state_.uav_pos.size())
    throw ContractViolation("expected one action per UAV");
  std::vector<Vec2> accel;
  accel.reserve(actions.size());
  for (int a : actions) accel.push_back(decode_action(cfg_, a));

  const double w = cfg_.world_size;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    Vec2 v = state_.uav_vel[i] + accel[i];
    const double speed = v.norm();
    if (speed > cfg_.max_speed) v = (cfg_.max_speed / speed) * v;
    Vec2 p = state_.uav_pos[i] + v;
    if (p.x < 0.0 || p.x > w) {
      p.x = std::clamp(p.x, 0.0, w);
      v.x = 0.0;
    }
    if (p.y < 0.0 || p.y > w) {
      p.y = std::clamp(p.y, 0.0, w);
      v.y = 0.0;
    }
    state_.uav_pos[i] = p;
    state_.uav_vel[i] = v;
  }
  ++state_.step;

  StepOutcome out;
  const CoverageCount cov = count_coverage(cfg_, state_);
  out.adj = build_adjacency(cfg_, state_);
  out.connected = is_connected(out.adj);
  const std::size_t n = state_.uav_pos.size();
  out.rewards.resize(n);
  out.energy.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.energy[i] = energy_of(cfg_, state_.uav_vel[i].norm());
    out.rewards[i] = reward_from_counts(cfg_, cov.per_uav[i], cov.total(), out.energy[i]);
    if (!out.connected) out.rewards[i] -= cfg_.connectivity_penalty;
  }
  out.coverage_index = static_cast<double>(cov.total()) / static_cast<double>(cfg_.n_terminals);
  out.energy_index = std::accumulate(out.energy.begin(), out.energy.end(), 0.0) / static_cast<double>(n);
  out.covered_terminals = cov.covered_ids;
  out.done = state_.step == cfg_.episode_len;
  out.obs = observe();
  return out;
}

}  // namespace uavcov::env
