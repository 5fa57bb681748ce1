#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uavcov/env.hpp"
#include "uavcov/ppo.hpp"

namespace uavcov::harness {

struct RunConfig {
  env::EnvConfig env;
  ppo::TrainConfig train;
  ppo::Architecture arch;
  ppo::NetworkConfig net;
  int episodes = 3000;
  int parallel_envs = 5;
  int metric_window = 10;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  int checkpoint_every = 100;
  /// Worker threads for rollout collection; results do not depend on it.
  int threads = 1;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Config text: one `key = value` per line, `#` comments. Keys mirror the
// RunConfig fields, e.g. `env.n_uavs = 10`, `train.gamma = 0.99`,
// `arch.variant = SharedBackbone`, `episodes = 3000`.

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
/// Applies each key to `config`; throws ContractViolation on unknown keys or
/// malformed values.
void apply_key_values(RunConfig& config, const KeyValues& kv);
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_text(const std::string& text);
/// Canonical text form; config_from_text(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

/// Scenario used by the desk-scale checks: 3 UAVs, 30 terminals, 60×60 map,
/// 50-step episodes, 400 episodes.
RunConfig desk_scale_config();

// ---------------------------------------------------------------------------

struct EpisodeMetrics {
  int episode = 0;
  double mean_reward = 0.0;
  double coverage_index = 0.0;
  double energy_index = 0.0;
  double connected_fraction = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
};

enum class RowType { raw, avg };

struct MetricsRow {
  RowType type = RowType::raw;
  EpisodeMetrics metrics;
};

inline constexpr const char* kMetricsHeader =
    "episode,row_type,mean_reward,coverage_index,energy_index,connected_fraction,actor_loss,critic_loss";

std::string format_metrics_row(RowType type, const EpisodeMetrics& m);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);
/// Field-wise arithmetic mean; episode is taken from the last row.
EpisodeMetrics average(std::span<const EpisodeMetrics> rows);

// ---------------------------------------------------------------------------
// Checkpoint container: a text preamble
//   uavcov-checkpoint 1
//   config <byte count>
//   <RunConfig text>
//   params <record count>
// followed by binary records, each: u32 name length, name bytes, u32 rank,
// rank × u64 dims, then the values as little-endian IEEE-754 doubles.

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ppo::Policy policy;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ppo::Policy& policy);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds a freshly initialized policy for `config` (the untrained baseline).
ppo::Policy make_policy(const RunConfig& config);

// ---------------------------------------------------------------------------

struct EpisodeSummary {
  double mean_reward = 0.0;
  double coverage_index = 0.0;
  double energy_index = 0.0;
  double connected_fraction = 0.0;
};

enum class ActionMode { sample, greedy };

/// Plays one episode in `environment` (already reset) with the policy,
/// optionally recording the rollout and per-step outcomes.
EpisodeSummary play_episode(env::Environment& environment, const env::Environment::ResetResult& start,
                            const ppo::Policy& policy, ActionMode mode, Rng& rng,
                            ppo::Rollout* rollout = nullptr,
                            const std::function<void(const env::StepOutcome&)>& on_step = {});

struct TrainResult {
  std::vector<EpisodeMetrics> episodes;
  std::vector<EpisodeMetrics> averaged;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path metrics_path;
};

struct TrainHooks {
  /// Called after each episode's update.
  std::function<void(const EpisodeMetrics&)> on_episode;
};

/// Runs the full training loop, writing `metrics.csv` and checkpoints into
/// config.out_dir. Throws IoError / NumericalError; rows already written and
/// the last checkpoint remain on disk.
TrainResult train(const RunConfig& config, const TrainHooks& hooks = {});

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;
};

struct EvalSummary {
  int episodes = 0;
  Stat coverage_index;
  Stat energy_index;
  Stat reward;
  Stat connected_fraction;
  std::vector<EpisodeSummary> per_episode;

  bool empty() const { return episodes == 0; }
};

/// Greedy rollouts without learning. Episode k resets with
/// derive_seed(seed, {k}).
EvalSummary evaluate(const ppo::Policy& policy, const env::EnvConfig& env_config, int episodes,
                     std::uint64_t seed);
EvalSummary evaluate(const std::filesystem::path& checkpoint, const env::EnvConfig& env_config,
                     int episodes, std::uint64_t seed);

/// Throws ShapeMismatch when `policy` cannot consume observations from
/// `env_config`.
void check_compatible(const ppo::Policy& policy, const env::EnvConfig& env_config);

/// One greedy episode written as CSV records:
///   terminal,<id>,<x>,<y>            (once per terminal)
///   uav,<step>,<id>,<x>,<y>          (steps 1..episode_len)
///   covered,<step>,<id;id;...>
void export_trajectory(const ppo::Policy& policy, const env::EnvConfig& env_config, std::uint64_t seed,
                       const std::filesystem::path& out);
void export_trajectory(const std::filesystem::path& checkpoint, const env::EnvConfig& env_config,
                       std::uint64_t seed, const std::filesystem::path& out);

}  // namespace uavcov::harness
