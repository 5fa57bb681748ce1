// uavcov: train, evaluate and export UAV coverage policies.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "uavcov/errors.hpp"
#include "uavcov/harness.hpp"

namespace {

using namespace uavcov;

struct TrainArgs {
  std::string config;
  std::optional<std::string> arch;
  std::optional<std::string> aggregator;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<std::string> out;
  std::optional<int> threads;
};

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  int episodes = 10;
  std::uint64_t seed = 0;
};

struct ExportArgs {
  std::string checkpoint;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

int run_train(const TrainArgs& args) {
  harness::RunConfig config = harness::load_config(args.config);
  harness::KeyValues overrides;
  if (args.arch) overrides["arch.variant"] = *args.arch;
  if (args.aggregator) overrides["arch.aggregator"] = *args.aggregator;
  if (args.seed) overrides["seed"] = std::to_string(*args.seed);
  if (args.episodes) overrides["episodes"] = std::to_string(*args.episodes);
  if (args.out) overrides["out_dir"] = *args.out;
  if (args.threads) overrides["threads"] = std::to_string(*args.threads);
  harness::apply_key_values(config, overrides);

  fmt::print("training {} (aggregator {}) for {} episodes x {} envs -> {}\n", ppo::to_string(config.arch.variant),
             config.arch.aggregator_enabled ? "on" : "off", config.episodes, config.parallel_envs,
             config.out_dir.string());
  harness::TrainHooks hooks;
  hooks.on_episode = [&](const harness::EpisodeMetrics& m) {
    if (m.episode % config.metric_window == 0)
      fmt::print("episode {:5d}  reward {:9.4f}  coverage {:.4f}  energy {:.4f}  connected {:.3f}\n", m.episode,
                 m.mean_reward, m.coverage_index, m.energy_index, m.connected_fraction);
  };
  const harness::TrainResult result = harness::train(config, hooks);
  fmt::print("metrics: {}\n", result.metrics_path.string());
  if (!result.checkpoints.empty()) fmt::print("checkpoint: {}\n", result.checkpoints.back().string());
  return 0;
}

int run_eval(const EvalArgs& args) {
  const harness::RunConfig config = harness::load_config(args.config);
  const harness::EvalSummary s = harness::evaluate(args.checkpoint, config.env, args.episodes, args.seed);
  if (s.empty()) {
    fmt::print("no episodes evaluated\n");
    return 0;
  }
  fmt::print("episodes            {}\n", s.episodes);
  fmt::print("coverage_index      {:.6f} +/- {:.6f}\n", s.coverage_index.mean, s.coverage_index.stddev);
  fmt::print("energy_index        {:.6f} +/- {:.6f}\n", s.energy_index.mean, s.energy_index.stddev);
  fmt::print("reward              {:.6f} +/- {:.6f}\n", s.reward.mean, s.reward.stddev);
  fmt::print("connected_fraction  {:.6f} +/- {:.6f}\n", s.connected_fraction.mean, s.connected_fraction.stddev);
  return 0;
}

int run_export(const ExportArgs& args) {
  const harness::RunConfig config = harness::load_config(args.config);
  harness::export_trajectory(args.checkpoint, config.env, args.seed, args.out);
  fmt::print("trajectory: {}\n", args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-UAV coverage with shared-backbone PPO"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a policy");
  train_cmd->add_option("--config", train.config, "Run config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--arch", train.arch, "IndividualCritic | GlobalCritic | SharedBackbone");
  train_cmd->add_option("--aggregator", train.aggregator, "on | off")->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--seed", train.seed, "Run seed");
  train_cmd->add_option("--episodes", train.episodes, "Episode count");
  train_cmd->add_option("--out", train.out, "Output directory");
  train_cmd->add_option("--threads", train.threads, "Rollout worker threads");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--config", eval.config)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--episodes", eval.episodes)->required()->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--seed", eval.seed)->required();

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export-traj", "Write one greedy episode as CSV records");
  export_cmd->add_option("--checkpoint", exp.checkpoint)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--config", exp.config)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--seed", exp.seed)->required();
  export_cmd->add_option("--out", exp.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*export_cmd) return run_export(exp);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
