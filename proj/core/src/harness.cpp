#include "uavcov/harness.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "uavcov/errors.hpp"
#include "uavcov/seeding.hpp"

namespace uavcov::harness {

namespace {

constexpr std::uint64_t kEnvStream = 1;
constexpr std::uint64_t kSampleStream = 2;

nn::Matrix stack(const std::vector<env::Observation>& obs) {
  const auto rows = static_cast<Eigen::Index>(obs.size());
  const auto cols = static_cast<Eigen::Index>(obs.front().size());
  nn::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    m.row(r) = Eigen::Map<const nn::RowVector>(obs[static_cast<std::size_t>(r)].values.data(), cols);
  return m;
}

Stat stat_of(const std::vector<EpisodeSummary>& xs, double EpisodeSummary::*field) {
  Stat s;
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  for (const auto& x : xs) s.mean += x.*field;
  s.mean /= n;
  double var = 0.0;
  for (const auto& x : xs) var += (x.*field - s.mean) * (x.*field - s.mean);
  s.stddev = std::sqrt(var / n);
  return s;
}

}  // namespace

std::string format_metrics_row(RowType type, const EpisodeMetrics& m) {
  return fmt::format("{},{},{},{},{},{},{},{}", m.episode, type == RowType::raw ? "raw" : "avg", m.mean_reward,
                     m.coverage_index, m.energy_index, m.connected_fraction, m.actor_loss, m.critic_loss);
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw IoError("unexpected metrics header in " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw IoError("malformed metrics row: " + line);
    MetricsRow row;
    row.type = cells[1] == "avg" ? RowType::avg : RowType::raw;
    row.metrics.episode = std::stoi(cells[0]);
    row.metrics.mean_reward = std::stod(cells[2]);
    row.metrics.coverage_index = std::stod(cells[3]);
    row.metrics.energy_index = std::stod(cells[4]);
    row.metrics.connected_fraction = std::stod(cells[5]);
    row.metrics.actor_loss = std::stod(cells[6]);
    row.metrics.critic_loss = std::stod(cells[7]);
    rows.push_back(row);
  }
  return rows;
}

EpisodeMetrics average(std::span<const EpisodeMetrics> rows) {
  require(!rows.empty(), "average of no rows");
  EpisodeMetrics out;
  for (const auto& r : rows) {
    out.mean_reward += r.mean_reward;
    out.coverage_index += r.coverage_index;
    out.energy_index += r.energy_index;
    out.connected_fraction += r.connected_fraction;
    out.actor_loss += r.actor_loss;
    out.critic_loss += r.critic_loss;
  }
  const double n = static_cast<double>(rows.size());
  out.mean_reward /= n;
  out.coverage_index /= n;
  out.energy_index /= n;
  out.connected_fraction /= n;
  out.actor_loss /= n;
  out.critic_loss /= n;
  out.episode = rows.back().episode;
  return out;
}

EpisodeSummary play_episode(env::Environment& environment, const env::Environment::ResetResult& start,
                            const ppo::Policy& policy, ActionMode mode, Rng& rng, ppo::Rollout* rollout,
                            const std::function<void(const env::StepOutcome&)>& on_step) {
  const env::EnvConfig& cfg = environment.config();
  nn::Matrix obs = stack(start.obs);
  AdjacencyMatrix adj = start.adj;
  const auto n = static_cast<std::size_t>(cfg.n_uavs);
  EpisodeSummary summary;
  double reward_sum = 0.0;
  int connected_steps = 0;
  int steps = 0;
  if (rollout != nullptr) rollout->steps.reserve(static_cast<std::size_t>(cfg.episode_len));

  while (environment.state().step < cfg.episode_len) {
    const ppo::Policy::Output out = policy.forward(obs, adj);
    std::vector<int> actions(n);
    std::vector<double> logprobs(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = out.probs.row(static_cast<Eigen::Index>(i));
      const std::span<const double> probs(row.data(), static_cast<std::size_t>(row.size()));
      if (mode == ActionMode::sample) {
        const nn::CategoricalDraw draw = nn::categorical_sample(probs, rng);
        actions[i] = draw.action;
        logprobs[i] = draw.log_prob;
      } else {
        actions[i] = nn::argmax(probs);
        logprobs[i] = std::log(probs[static_cast<std::size_t>(actions[i])]);
      }
    }
    env::StepOutcome outcome = environment.step(actions);
    ++steps;
    reward_sum += std::accumulate(outcome.rewards.begin(), outcome.rewards.end(), 0.0);
    summary.coverage_index += outcome.coverage_index;
    summary.energy_index += outcome.energy_index;
    connected_steps += outcome.connected ? 1 : 0;
    if (on_step) on_step(outcome);
    if (rollout != nullptr) {
      ppo::StepRecord rec;
      rec.obs = std::move(obs);
      rec.adj = std::move(adj);
      rec.actions = std::move(actions);
      rec.logprobs = std::move(logprobs);
      rec.rewards = outcome.rewards;
      rec.values.assign(out.values.data(), out.values.data() + out.values.size());
      rollout->steps.push_back(std::move(rec));
    }
    obs = stack(outcome.obs);
    adj = std::move(outcome.adj);
  }
  if (rollout != nullptr) {
    const ppo::Policy::Output last = policy.forward(obs, adj);
    rollout->final_values.assign(last.values.data(), last.values.data() + last.values.size());
  }
  if (steps > 0) {
    summary.mean_reward = reward_sum / static_cast<double>(steps * static_cast<int>(n));
    summary.coverage_index /= steps;
    summary.energy_index /= steps;
    summary.connected_fraction = static_cast<double>(connected_steps) / steps;
  }
  return summary;
}

TrainResult train(const RunConfig& config, const TrainHooks& hooks) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.out_dir.string() + ": " + ec.message());

  TrainResult result;
  result.metrics_path = config.out_dir / "metrics.csv";
  std::ofstream metrics(result.metrics_path, std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + result.metrics_path.string());
  metrics << kMetricsHeader << '\n';

  ppo::Policy policy = make_policy(config);
  ppo::Optimizers optimizers(config.train);
  const auto envs = static_cast<std::size_t>(config.parallel_envs);

  for (int episode = 1; episode <= config.episodes; ++episode) {
    std::vector<ppo::Rollout> rollouts(envs);
    std::vector<EpisodeSummary> summaries(envs);
    auto run_env = [&](std::size_t e) {
      const auto ep = static_cast<std::uint64_t>(episode);
      env::Environment environment(config.env);
      const auto start = environment.reset(derive_seed(config.seed, {ep, e, kEnvStream}));
      Rng rng(derive_seed(config.seed, {ep, e, kSampleStream}));
      summaries[e] = play_episode(environment, start, policy, ActionMode::sample, rng, &rollouts[e]);
    };
    if (config.threads <= 1 || envs == 1) {
      for (std::size_t e = 0; e < envs; ++e) run_env(e);
    } else {
      const auto workers = static_cast<std::size_t>(config.threads);
      for (std::size_t base = 0; base < envs; base += workers) {
        std::vector<std::future<void>> jobs;
        for (std::size_t e = base; e < std::min(envs, base + workers); ++e)
          jobs.push_back(std::async(std::launch::async, run_env, e));
        for (auto& j : jobs) j.get();
      }
    }

    EpisodeMetrics m;
    m.episode = episode;
    for (const auto& s : summaries) {
      m.mean_reward += s.mean_reward;
      m.coverage_index += s.coverage_index;
      m.energy_index += s.energy_index;
      m.connected_fraction += s.connected_fraction;
    }
    const double denom = static_cast<double>(envs);
    m.mean_reward /= denom;
    m.coverage_index /= denom;
    m.energy_index /= denom;
    m.connected_fraction /= denom;

    ppo::UpdateStats stats;
    try {
      stats = ppo::update(policy, optimizers, rollouts, config.train);
    } catch (const NumericalError& err) {
      throw NumericalError(fmt::format("episode {}: {}", episode, err.what()));
    }
    m.actor_loss = stats.actor_loss;
    m.critic_loss = stats.critic_loss;

    result.episodes.push_back(m);
    metrics << format_metrics_row(RowType::raw, m) << '\n';
    if (episode % config.metric_window == 0) {
      const auto window = std::span<const EpisodeMetrics>(result.episodes).last(
          static_cast<std::size_t>(config.metric_window));
      const EpisodeMetrics avg = average(window);
      result.averaged.push_back(avg);
      metrics << format_metrics_row(RowType::avg, avg) << '\n';
    }
    metrics.flush();
    if (!metrics) throw IoError("failed writing " + result.metrics_path.string());

    if (episode % config.checkpoint_every == 0 || episode == config.episodes) {
      const auto path = config.out_dir / fmt::format("checkpoint_{:06d}.ckpt", episode);
      save_checkpoint(path, config, policy);
      result.checkpoints.push_back(path);
    }
    if (hooks.on_episode) hooks.on_episode(m);
  }
  return result;
}

void check_compatible(const ppo::Policy& policy, const env::EnvConfig& env_config) {
  env_config.validate();
  if (policy.n_agents() != env_config.n_uavs || policy.obs_dim() != env_config.obs_dim())
    throw ShapeMismatch(fmt::format("checkpoint expects {} UAVs with {}-wide observations; scenario has {} UAVs with {}",
                                    policy.n_agents(), policy.obs_dim(), env_config.n_uavs, env_config.obs_dim()));
}

EvalSummary evaluate(const ppo::Policy& policy, const env::EnvConfig& env_config, int episodes, std::uint64_t seed) {
  require(episodes >= 0, "evaluate: negative episode count");
  check_compatible(policy, env_config);
  EvalSummary out;
  env::Environment environment(env_config);
  Rng unused(seed);
  for (int k = 0; k < episodes; ++k) {
    const auto start = environment.reset(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    out.per_episode.push_back(play_episode(environment, start, policy, ActionMode::greedy, unused));
  }
  out.episodes = episodes;
  out.coverage_index = stat_of(out.per_episode, &EpisodeSummary::coverage_index);
  out.energy_index = stat_of(out.per_episode, &EpisodeSummary::energy_index);
  out.reward = stat_of(out.per_episode, &EpisodeSummary::mean_reward);
  out.connected_fraction = stat_of(out.per_episode, &EpisodeSummary::connected_fraction);
  return out;
}

EvalSummary evaluate(const std::filesystem::path& checkpoint, const env::EnvConfig& env_config, int episodes,
                     std::uint64_t seed) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  return evaluate(ckpt.policy, env_config, episodes, seed);
}

void export_trajectory(const ppo::Policy& policy, const env::EnvConfig& env_config, std::uint64_t seed,
                       const std::filesystem::path& out) {
  check_compatible(policy, env_config);
  std::ofstream file(out, std::ios::trunc);
  if (!file) throw IoError("cannot write trajectory file " + out.string());
  env::Environment environment(env_config);
  const auto start = environment.reset(derive_seed(seed, {0}));
  file << "record,a,b,c,d\n";
  const auto& terminals = environment.state().terminal_pos;
  for (std::size_t t = 0; t < terminals.size(); ++t)
    file << fmt::format("terminal,{},{},{}\n", t, terminals[t].x, terminals[t].y);
  Rng unused(seed);
  play_episode(environment, start, policy, ActionMode::greedy, unused, nullptr, [&](const env::StepOutcome& o) {
    const auto& s = environment.state();
    for (std::size_t i = 0; i < s.uav_pos.size(); ++i)
      file << fmt::format("uav,{},{},{},{}\n", s.step, i, s.uav_pos[i].x, s.uav_pos[i].y);
    file << fmt::format("covered,{},{}\n", s.step, fmt::join(o.covered_terminals, ";"));
  });
  if (!file) throw IoError("failed writing trajectory file " + out.string());
}

void export_trajectory(const std::filesystem::path& checkpoint, const env::EnvConfig& env_config, std::uint64_t seed,
                       const std::filesystem::path& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  export_trajectory(ckpt.policy, env_config, seed, out);
}

}  // namespace uavcov::harness
