#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <string_view>

#include "uavcov/errors.hpp"
#include "uavcov/harness.hpp"

namespace uavcov::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T out{};
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc{} || ptr != end)
    throw ContractViolation("config key '" + key + "': cannot parse '" + text + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "on" || text == "true" || text == "1" || text == "yes") return true;
  if (text == "off" || text == "false" || text == "0" || text == "no") return false;
  throw ContractViolation("config key '" + key + "': expected on/off, got '" + text + "'");
}

std::vector<int> parse_widths(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, std::string(trim(item))));
  if (out.empty()) throw ContractViolation("config key '" + key + "': empty width list");
  return out;
}

nn::Activation parse_activation(const std::string& key, const std::string& text) {
  if (text == "tanh") return nn::Activation::tanh;
  if (text == "relu") return nn::Activation::relu;
  throw ContractViolation("config key '" + key + "': activation must be tanh or relu");
}

std::string activation_name(nn::Activation a) { return a == nn::Activation::relu ? "relu" : "tanh"; }

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define UAVCOV_NUM_FIELD(KEY, MEMBER)                                                           \
  Field {                                                                                       \
    KEY, [](const RunConfig& c) { return fmt::format("{}", c.MEMBER); },                        \
        [](RunConfig& c, const std::string& k, const std::string& v) {                          \
          c.MEMBER = parse_number<std::remove_cvref_t<decltype(c.MEMBER)>>(k, v);               \
        }                                                                                       \
  }

#define UAVCOV_BOOL_FIELD(KEY, MEMBER)                                                          \
  Field {                                                                                       \
    KEY, [](const RunConfig& c) { return std::string(c.MEMBER ? "on" : "off"); },              \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_bool(k, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      UAVCOV_NUM_FIELD("env.world_size", env.world_size),
      UAVCOV_NUM_FIELD("env.n_uavs", env.n_uavs),
      UAVCOV_NUM_FIELD("env.n_terminals", env.n_terminals),
      UAVCOV_NUM_FIELD("env.coverage_radius", env.coverage_radius),
      UAVCOV_NUM_FIELD("env.sensing_radius", env.sensing_radius),
      UAVCOV_NUM_FIELD("env.comm_radius", env.comm_radius),
      UAVCOV_NUM_FIELD("env.episode_len", env.episode_len),
      UAVCOV_NUM_FIELD("env.max_speed", env.max_speed),
      UAVCOV_NUM_FIELD("env.accel_low", env.accel_low),
      UAVCOV_NUM_FIELD("env.accel_high", env.accel_high),
      UAVCOV_NUM_FIELD("env.terminal_slots", env.terminal_slots),
      UAVCOV_NUM_FIELD("env.neighbor_slots", env.neighbor_slots),
      UAVCOV_NUM_FIELD("env.group_reward_coeff", env.group_reward_coeff),
      UAVCOV_NUM_FIELD("env.pos_bits", env.pos_bits),
      UAVCOV_NUM_FIELD("env.connectivity_penalty", env.connectivity_penalty),
      UAVCOV_NUM_FIELD("env.seed", env.seed),
      UAVCOV_NUM_FIELD("train.gamma", train.gamma),
      UAVCOV_NUM_FIELD("train.clip_epsilon", train.clip_epsilon),
      UAVCOV_NUM_FIELD("train.update_epochs", train.update_epochs),
      UAVCOV_NUM_FIELD("train.actor_lr", train.actor_lr),
      UAVCOV_NUM_FIELD("train.critic_lr", train.critic_lr),
      Field{"train.advantage_mode",
            [](const RunConfig& c) {
              return std::string(c.train.advantage_mode == ppo::AdvantageMode::gae ? "gae" : "monte_carlo");
            },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "monte_carlo") c.train.advantage_mode = ppo::AdvantageMode::monte_carlo;
              else if (v == "gae") c.train.advantage_mode = ppo::AdvantageMode::gae;
              else throw ContractViolation("config key '" + k + "': expected monte_carlo or gae");
            }},
      UAVCOV_NUM_FIELD("train.gae_lambda", train.gae_lambda),
      UAVCOV_NUM_FIELD("train.entropy_coeff", train.entropy_coeff),
      UAVCOV_NUM_FIELD("train.grad_clip_norm", train.grad_clip_norm),
      UAVCOV_BOOL_FIELD("train.normalize_advantage", train.normalize_advantage),
      Field{"arch.variant", [](const RunConfig& c) { return ppo::to_string(c.arch.variant); },
            [](RunConfig& c, const std::string&, const std::string& v) { c.arch.variant = ppo::parse_variant(v); }},
      UAVCOV_BOOL_FIELD("arch.aggregator", arch.aggregator_enabled),
      UAVCOV_BOOL_FIELD("arch.aggregate_critic", arch.aggregate_critic),
      Field{"net.encoder_widths",
            [](const RunConfig& c) { return fmt::format("{}", fmt::join(c.net.encoder_widths, ",")); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.net.encoder_widths = parse_widths(k, v); }},
      UAVCOV_NUM_FIELD("net.head_hidden", net.head_hidden),
      UAVCOV_NUM_FIELD("net.alpha", net.alpha),
      Field{"net.activation", [](const RunConfig& c) { return activation_name(c.net.activation); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.net.activation = parse_activation(k, v); }},
      UAVCOV_NUM_FIELD("net.actor_output_gain", net.actor_output_gain),
      UAVCOV_NUM_FIELD("episodes", episodes),
      UAVCOV_NUM_FIELD("parallel_envs", parallel_envs),
      UAVCOV_NUM_FIELD("metric_window", metric_window),
      UAVCOV_NUM_FIELD("seed", seed),
      Field{"out_dir", [](const RunConfig& c) { return c.out_dir.string(); },
            [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
      UAVCOV_NUM_FIELD("checkpoint_every", checkpoint_every),
      UAVCOV_NUM_FIELD("threads", threads),
  };
  return table;
}

#undef UAVCOV_NUM_FIELD
#undef UAVCOV_BOOL_FIELD

}  // namespace

void RunConfig::validate() const {
  env.validate();
  train.validate();
  require(episodes >= 1, "episodes must be at least 1");
  require(parallel_envs >= 1, "parallel_envs must be at least 1");
  require(metric_window >= 1, "metric_window must be at least 1");
  require(checkpoint_every >= 1, "checkpoint_every must be at least 1");
  require(threads >= 1, "threads must be at least 1");
  require(net.alpha >= 0.0 && net.alpha <= 1.0, "net.alpha must lie in [0, 1]");
  require(net.head_hidden >= 1, "net.head_hidden must be positive");
  for (int w : net.encoder_widths) require(w >= 1, "net.encoder_widths must be positive");
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ContractViolation("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key(trim(view.substr(0, eq)));
    const std::string value(trim(view.substr(eq + 1)));
    if (key.empty()) throw ContractViolation("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

void apply_key_values(RunConfig& config, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ContractViolation("unknown config key '" + key + "'");
    it->set(config, key, value);
  }
}

RunConfig config_from_text(const std::string& text) {
  RunConfig config;
  apply_key_values(config, parse_key_values(text));
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_text(buf.str());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(config));
  return out;
}

RunConfig desk_scale_config() {
  RunConfig c;
  c.env.world_size = 60.0;
  c.env.n_uavs = 3;
  c.env.n_terminals = 30;
  c.env.episode_len = 50;
  c.episodes = 400;
  c.parallel_envs = 5;
  c.metric_window = 10;
  c.train.gamma = 0.9;
  c.train.actor_lr = 1e-3;
  c.train.critic_lr = 1e-3;
  c.train.entropy_coeff = 0.01;
  c.arch = {ppo::Variant::SharedBackbone, true, false};
  return c;
}

}  // namespace uavcov::harness
