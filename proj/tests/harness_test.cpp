#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "uavcov/errors.hpp"
#include "uavcov/harness.hpp"

namespace uavcov::harness {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("uavcov_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny(const std::string& name, int episodes) {
  RunConfig c = desk_scale_config();
  c.env.episode_len = 10;
  c.episodes = episodes;
  c.parallel_envs = 2;
  c.metric_window = 10;
  c.checkpoint_every = 1000;
  c.net.encoder_widths = {32, 16};
  c.net.head_hidden = 16;
  c.seed = 3;
  c.out_dir = scratch(name);
  return c;
}

TEST(Config, TextRoundTrip) {
  RunConfig c = desk_scale_config();
  c.train.advantage_mode = ppo::AdvantageMode::gae;
  c.train.gamma = 0.123456789012345;
  c.arch = {ppo::Variant::GlobalCritic, false, true};
  c.net.encoder_widths = {7, 5, 3};
  c.net.activation = nn::Activation::relu;
  c.seed = 18446744073709551615ULL;
  const RunConfig back = config_from_text(to_text(c));
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(back.train.gamma, c.train.gamma);
  EXPECT_EQ(back.arch, c.arch);
  EXPECT_EQ(back.net, c.net);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(Config, CommentsAndWhitespace) {
  const RunConfig c = config_from_text("# header\n  env.n_uavs = 4   # trailing\n\narch.variant = individual\n");
  EXPECT_EQ(c.env.n_uavs, 4);
  EXPECT_EQ(c.arch.variant, ppo::Variant::IndividualCritic);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_text("env.n_drones = 3\n"), ContractViolation);
  EXPECT_THROW(config_from_text("env.n_uavs = three\n"), ContractViolation);
  EXPECT_THROW(config_from_text("arch.aggregator = maybe\n"), ContractViolation);
  EXPECT_THROW(config_from_text("no equals sign\n"), ContractViolation);
  EXPECT_THROW(config_from_text("env.n_uavs = 0\n"), ContractViolation);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"desk_scale.cfg", "full_scale.cfg"}) {
    const fs::path p = fs::path(UAVCOV_SOURCE_DIR) / "configs" / name;
    EXPECT_NO_THROW(load_config(p)) << p;
  }
  const RunConfig desk = load_config(fs::path(UAVCOV_SOURCE_DIR) / "configs" / "desk_scale.cfg");
  RunConfig preset = desk_scale_config();
  preset.out_dir = desk.out_dir;
  EXPECT_EQ(to_text(desk), to_text(preset));
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), IoError);
}

TEST(Metrics, FormatAndReadBack) {
  const fs::path dir = scratch("metrics_rt");
  EpisodeMetrics m{7, 1.25, 0.1 + 0.2, 0.75, 1.0, -0.5, 3.0};
  {
    std::ofstream out(dir / "m.csv");
    out << kMetricsHeader << '\n' << format_metrics_row(RowType::raw, m) << '\n';
  }
  const auto rows = read_metrics(dir / "m.csv");
  ASSERT_EQ(rows.size(), 1U);
  EXPECT_EQ(rows[0].type, RowType::raw);
  EXPECT_EQ(rows[0].metrics.coverage_index, 0.1 + 0.2);
  EXPECT_EQ(rows[0].metrics.episode, 7);
}

TEST(Train, SmokeOneEpisode) {
  RunConfig c = tiny("smoke", 1);
  const TrainResult r = train(c);
  ASSERT_EQ(r.episodes.size(), 1U);
  EXPECT_TRUE(r.averaged.empty());
  ASSERT_EQ(r.checkpoints.size(), 1U);
  EXPECT_TRUE(fs::exists(r.checkpoints[0]));
  const auto rows = read_metrics(r.metrics_path);
  ASSERT_EQ(rows.size(), 1U);
  EXPECT_EQ(rows[0].type, RowType::raw);
}

TEST(Train, WindowAveragesAndRowCounts) {
  RunConfig c = tiny("windows", 30);
  c.checkpoint_every = 10;
  const TrainResult r = train(c);
  const auto rows = read_metrics(r.metrics_path);
  int raw = 0, avg = 0;
  for (const auto& row : rows) (row.type == RowType::raw ? raw : avg)++;
  EXPECT_EQ(raw, 30);
  EXPECT_EQ(avg, 3);
  EXPECT_EQ(r.checkpoints.size(), 3U);
  // avg row for episodes 11..20
  ASSERT_EQ(r.averaged.size(), 3U);
  double mean = 0.0;
  for (int k = 10; k < 20; ++k) mean += r.episodes[static_cast<std::size_t>(k)].coverage_index / 10.0;
  EXPECT_NEAR(r.averaged[1].coverage_index, mean, 1e-12);
  EXPECT_EQ(r.averaged[1].episode, 20);
  for (const auto& row : rows) {
    EXPECT_GE(row.metrics.coverage_index, 0.0);
    EXPECT_LE(row.metrics.coverage_index, 1.0);
    EXPECT_GE(row.metrics.energy_index, 0.5);
    EXPECT_LE(row.metrics.energy_index, 1.0);
  }
}

TEST(Train, ByteIdenticalAcrossRuns) {
  const RunConfig c = tiny("det", 5);
  train(c);
  const std::string metrics = slurp(c.out_dir / "metrics.csv");
  const std::string ckpt = slurp(c.out_dir / "checkpoint_000005.ckpt");
  fs::remove_all(c.out_dir);
  train(c);
  EXPECT_EQ(slurp(c.out_dir / "metrics.csv"), metrics);
  EXPECT_EQ(slurp(c.out_dir / "checkpoint_000005.ckpt"), ckpt);
}

TEST(Train, ThreadCountDoesNotChangeResults) {
  RunConfig a = tiny("thr_1", 4);
  RunConfig b = tiny("thr_2", 4);
  a.parallel_envs = b.parallel_envs = 3;
  b.threads = 2;
  train(a);
  train(b);
  EXPECT_EQ(slurp(a.out_dir / "metrics.csv"), slurp(b.out_dir / "metrics.csv"));
}

TEST(Train, EveryArchitectureRuns) {
  int k = 0;
  for (ppo::Variant v : {ppo::Variant::IndividualCritic, ppo::Variant::GlobalCritic, ppo::Variant::SharedBackbone}) {
    for (bool agg : {false, true}) {
      RunConfig c = tiny("arch_" + std::to_string(k++), 2);
      c.arch = {v, agg, false};
      const TrainResult r = train(c);
      EXPECT_EQ(r.episodes.size(), 2U);
      for (const auto& m : r.episodes) {
        EXPECT_TRUE(std::isfinite(m.actor_loss));
        EXPECT_TRUE(std::isfinite(m.critic_loss));
      }
    }
  }
}

TEST(Checkpoint, RoundTripGivesIdenticalForward) {
  RunConfig c = tiny("ckpt", 3);
  c.arch = {ppo::Variant::GlobalCritic, true, true};
  const TrainResult r = train(c);
  const Checkpoint ck = load_checkpoint(r.checkpoints.back());
  EXPECT_EQ(to_text(ck.config), to_text(c));

  env::Environment environment(c.env);
  const auto start = environment.reset(17);
  nn::Matrix obs(c.env.n_uavs, c.env.obs_dim());
  for (int i = 0; i < c.env.n_uavs; ++i)
    for (int j = 0; j < c.env.obs_dim(); ++j)
      obs(i, j) = start.obs[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(j)];
  // Save the reloaded policy again: the bytes must not change.
  const fs::path again = c.out_dir / "again.ckpt";
  save_checkpoint(again, ck.config, ck.policy);
  EXPECT_EQ(slurp(again), slurp(r.checkpoints.back()));
  const Checkpoint ck2 = load_checkpoint(again);
  const auto o1 = ck.policy.forward(obs, start.adj);
  const auto o2 = ck2.policy.forward(obs, start.adj);
  EXPECT_EQ(o1.probs, o2.probs);
  EXPECT_EQ(o1.values, o2.values);
}

TEST(Checkpoint, CorruptOrMissingFileIsIoError) {
  const fs::path dir = scratch("ckpt_bad");
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
  {
    std::ofstream out(dir / "junk.ckpt");
    out << "not a checkpoint\n";
  }
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), IoError);
  RunConfig c = tiny("ckpt_trunc", 1);
  const TrainResult r = train(c);
  const std::string bytes = slurp(r.checkpoints.back());
  {
    std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 100);
  }
  EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), IoError);
}

TEST(Evaluate, IncompatibleScenarioIsShapeMismatch) {
  RunConfig c = tiny("incompat", 1);
  const TrainResult r = train(c);
  env::EnvConfig other = c.env;
  other.n_uavs = 4;
  EXPECT_THROW(evaluate(r.checkpoints.back(), other, 1, 0), ShapeMismatch);
}

TEST(Evaluate, ZeroEpisodesIsEmpty) {
  const RunConfig c = tiny("eval0", 1);
  const EvalSummary s = evaluate(make_policy(c), c.env, 0, 1);
  EXPECT_TRUE(s.empty());
  EXPECT_TRUE(s.per_episode.empty());
}

TEST(Evaluate, DeterministicForSeed) {
  const RunConfig c = tiny("eval_det", 1);
  const ppo::Policy policy = make_policy(c);
  const EvalSummary a = evaluate(policy, c.env, 4, 99);
  const EvalSummary b = evaluate(policy, c.env, 4, 99);
  ASSERT_EQ(a.per_episode.size(), 4U);
  EXPECT_EQ(a.coverage_index.mean, b.coverage_index.mean);
  EXPECT_EQ(a.reward.stddev, b.reward.stddev);
  EXPECT_GE(a.coverage_index.mean, 0.0);
  EXPECT_LE(a.coverage_index.mean, 1.0);
}

TEST(Export, RowCountsAndIds) {
  const RunConfig c = tiny("export", 1);
  const fs::path out = c.out_dir / "traj.csv";
  export_trajectory(make_policy(c), c.env, 5, out);
  std::ifstream in(out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "record,a,b,c,d");
  int terminals = 0, uavs = 0, covered = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string kind;
    std::getline(ss, kind, ',');
    if (kind == "terminal") {
      ++terminals;
    } else if (kind == "uav") {
      ++uavs;
      std::string step, id;
      std::getline(ss, step, ',');
      std::getline(ss, id, ',');
      EXPECT_GE(std::stoi(step), 1);
      EXPECT_LE(std::stoi(step), c.env.episode_len);
      EXPECT_LT(std::stoi(id), c.env.n_uavs);
    } else if (kind == "covered") {
      ++covered;
      std::string step, ids;
      std::getline(ss, step, ',');
      std::getline(ss, ids);
      std::set<int> seen;
      std::istringstream is(ids);
      std::string id;
      while (std::getline(is, id, ';')) {
        const int t = std::stoi(id);
        EXPECT_GE(t, 0);
        EXPECT_LT(t, c.env.n_terminals);
        EXPECT_TRUE(seen.insert(t).second);
      }
    } else {
      ADD_FAILURE() << "unexpected record " << line;
    }
  }
  EXPECT_EQ(terminals, c.env.n_terminals);
  EXPECT_EQ(uavs, c.env.n_uavs * c.env.episode_len);
  EXPECT_EQ(covered, c.env.episode_len);
}

}  // namespace
}  // namespace uavcov::harness
