#include <benchmark/benchmark.h>

#include <vector>

#include "uavcov/env.hpp"
#include "uavcov/harness.hpp"
#include "uavcov/nn.hpp"
#include "uavcov/ppo.hpp"

using namespace uavcov;

static void BM_EnvStep(benchmark::State& state) {
  env::EnvConfig cfg;
  cfg.n_uavs = static_cast<int>(state.range(0));
  env::Environment environment(cfg);
  environment.reset(7);
  std::vector<int> actions(static_cast<std::size_t>(cfg.n_uavs));
  int k = 0;
  for (auto _ : state) {
    if (environment.state().step == cfg.episode_len) environment.reset(7);
    for (auto& a : actions) a = (k++) % env::kNumActions;
    benchmark::DoNotOptimize(environment.step(actions));
  }
}
BENCHMARK(BM_EnvStep)->Arg(3)->Arg(10);

static void BM_Aggregate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  nn::Matrix x = nn::Matrix::Random(static_cast<Eigen::Index>(n), 64);
  AdjacencyMatrix adj(n);
  for (std::size_t i = 0; i + 1 < n; ++i) adj.link(i, i + 1);
  for (auto _ : state) benchmark::DoNotOptimize(nn::aggregate(x, adj, 0.5));
}
BENCHMARK(BM_Aggregate)->Arg(10)->Arg(50);

static void BM_PolicyForward(benchmark::State& state) {
  env::EnvConfig cfg;
  ppo::Policy policy({ppo::Variant::SharedBackbone, true, false}, {}, cfg.n_uavs, cfg.obs_dim(), 3);
  env::Environment environment(cfg);
  const auto start = environment.reset(3);
  nn::Matrix obs(cfg.n_uavs, cfg.obs_dim());
  for (int i = 0; i < cfg.n_uavs; ++i)
    for (int j = 0; j < cfg.obs_dim(); ++j) obs(i, j) = start.obs[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(j)];
  for (auto _ : state) benchmark::DoNotOptimize(policy.forward(obs, start.adj));
}
BENCHMARK(BM_PolicyForward);

// One PPO epoch (forward + backward + Adam) on a desk-scale batch.
static void BM_UpdateEpoch(benchmark::State& state) {
  harness::RunConfig cfg = harness::desk_scale_config();
  cfg.arch.variant = static_cast<ppo::Variant>(state.range(0));
  cfg.train.update_epochs = 1;
  ppo::Policy policy = harness::make_policy(cfg);
  ppo::Optimizers opt(cfg.train);
  std::vector<ppo::Rollout> rollouts(static_cast<std::size_t>(cfg.parallel_envs));
  for (std::size_t e = 0; e < rollouts.size(); ++e) {
    env::Environment environment(cfg.env);
    const auto start = environment.reset(e);
    Rng rng(e);
    harness::play_episode(environment, start, policy, harness::ActionMode::sample, rng, &rollouts[e]);
  }
  const ppo::UpdateBatch batch = ppo::make_batch(rollouts, cfg.train);
  for (auto _ : state) benchmark::DoNotOptimize(ppo::update(policy, opt, batch, cfg.train));
}
BENCHMARK(BM_UpdateEpoch)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
