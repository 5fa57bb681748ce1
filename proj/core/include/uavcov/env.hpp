#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "uavcov/adjacency.hpp"
#include "uavcov/seeding.hpp"

namespace uavcov::env {

inline constexpr int kNumActions = 17;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  double norm() const;
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);

struct EnvConfig {
  double world_size = 200.0;
  int n_uavs = 10;
  int n_terminals = 120;
  double coverage_radius = 15.0;
  double sensing_radius = 19.0;
  double comm_radius = 30.0;
  int episode_len = 100;
  double max_speed = 2.0;
  double accel_low = 0.5;
  double accel_high = 1.0;
  int terminal_slots = 15;
  int neighbor_slots = 5;
  double group_reward_coeff = 0.1;
  /// Bits per axis in the binary position code.
  int pos_bits = 20;
  /// Subtracted from every agent's reward on steps where the swarm graph is
  /// disconnected. Zero disables it.
  double connectivity_penalty = 0.0;
  std::uint64_t seed = 0;

  /// Throws ContractViolation when any field is out of its domain.
  void validate() const;

  /// Length of one agent's observation vector.
  int obs_dim() const { return n_uavs + 2 * pos_bits + 2 + 3 * (terminal_slots + neighbor_slots); }
};

struct WorldState {
  std::vector<Vec2> uav_pos;
  std::vector<Vec2> uav_vel;
  std::vector<Vec2> terminal_pos;
  int step = 0;
  Rng rng;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Fixed-length per-agent feature vector. Layout, in order: agent one-hot
/// (N), x bits then y bits (least-significant first), velocity / max_speed
/// (2), terminal slots (3 each), neighbor slots (3 each).
struct Observation {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepOutcome {
  std::vector<Observation> obs;
  AdjacencyMatrix adj;
  std::vector<double> rewards;
  /// Per-UAV energy draw this step, in [0.5, 1].
  std::vector<double> energy;
  /// Ids of terminals covered by at least one UAV after the move.
  std::vector<int> covered_terminals;
  double coverage_index = 0.0;
  double energy_index = 0.0;
  bool connected = false;
  bool done = false;

  friend bool operator==(const StepOutcome&, const StepOutcome&) = default;
};

/// Per-UAV coverage tallies for one state.
struct CoverageCount {
  std::vector<int> per_uav;       // c_i
  std::vector<int> covered_ids;   // terminals covered by at least one UAV
  int total() const { return static_cast<int>(covered_ids.size()); }
};

Vec2 decode_action(const EnvConfig& cfg, int action_id);

/// Energy draw for a UAV flying at `speed`: 0.5 at hover, 1 at max_speed.
double energy_of(const EnvConfig& cfg, double speed);

CoverageCount count_coverage(const EnvConfig& cfg, const WorldState& state);

/// Reward from the already-tallied coverage and per-UAV energies.
double reward_from_counts(const EnvConfig& cfg, int individual_covered, int total_covered,
                          double energy);

std::vector<double> compute_reward(const EnvConfig& cfg, const WorldState& state);

AdjacencyMatrix build_adjacency(const EnvConfig& cfg, const WorldState& state);

Observation build_observation(const EnvConfig& cfg, const WorldState& state, int agent);

/// Seedable swarm coverage simulation. One instance per thread.
class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  struct ResetResult {
    std::vector<Observation> obs;
    AdjacencyMatrix adj;
  };

  ResetResult reset(std::uint64_t seed);
  StepOutcome step(std::span<const int> actions);

  /// Replaces the world state directly (test scaffolding, replay).
  void set_state(WorldState state) { state_ = std::move(state); }

  const EnvConfig& config() const { return cfg_; }
  const WorldState& state() const { return state_; }
  std::vector<Observation> observe() const;

 private:
  EnvConfig cfg_;
  WorldState state_;
};

}  // namespace uavcov::env
