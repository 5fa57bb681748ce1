#include "uavcov/ppo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "uavcov/errors.hpp"

namespace uavcov::ppo {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::IndividualCritic: return "IndividualCritic";
    case Variant::GlobalCritic: return "GlobalCritic";
    case Variant::SharedBackbone: return "SharedBackbone";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  std::string key;
  for (char c : text)
    if (std::isalnum(static_cast<unsigned char>(c))) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "individualcritic" || key == "individual") return Variant::IndividualCritic;
  if (key == "globalcritic" || key == "global") return Variant::GlobalCritic;
  if (key == "sharedbackbone" || key == "shared") return Variant::SharedBackbone;
  throw ContractViolation("unknown architecture variant '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
  require(clip_epsilon > 0.0 && clip_epsilon < 1.0, "clip_epsilon must lie in (0, 1)");
  require(update_epochs >= 1, "update_epochs must be at least 1");
  require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]");
  require(entropy_coeff >= 0.0, "entropy_coeff must be nonnegative");
  require(grad_clip_norm > 0.0, "grad_clip_norm must be positive");
}

Transition Rollout::transition(int step, int agent) const {
  require(step >= 0 && step < static_cast<int>(steps.size()), "transition: step out of range");
  const StepRecord& s = steps[static_cast<std::size_t>(step)];
  require(agent >= 0 && agent < static_cast<int>(s.actions.size()), "transition: agent out of range");
  const auto a = static_cast<std::size_t>(agent);
  Transition t;
  const auto row = s.obs.row(agent);
  t.obs.values.assign(row.data(), row.data() + row.size());
  t.adj = s.adj;
  t.action = s.actions[a];
  t.action_logprob = s.logprobs[a];
  t.reward = s.rewards[a];
  t.value = s.values[a];
  return t;
}

// ---------------------------------------------------------------------------

std::vector<double> compute_returns(std::span<const double> rewards, double final_value, double gamma) {
  require(!rewards.empty(), "compute_returns: empty reward sequence");
  std::vector<double> out(rewards.size());
  double running = final_value;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

std::vector<double> compute_advantage(std::span<const double> returns, std::span<const double> values) {
  require(returns.size() == values.size(), "compute_advantage: length mismatch");
  std::vector<double> out(returns.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = returns[t] - values[t];
  return out;
}

std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                double final_value, double gamma, double lambda) {
  require(rewards.size() == values.size() && !rewards.empty(), "compute_gae: length mismatch");
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double next = t + 1 < values.size() ? values[t + 1] : final_value;
    const double delta = rewards[t] + gamma * next - values[t];
    running = delta + gamma * lambda * running;
    out[t] = running;
  }
  return out;
}

void normalize_in_place(std::span<double> xs) {
  if (xs.empty()) return;
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : xs) x = sd > 0.0 ? (x - mean) / sd : x - mean;
}

double actor_loss(std::span<const double> new_logprobs, std::span<const double> old_logprobs,
                  std::span<const double> advantages, double clip_epsilon) {
  require(new_logprobs.size() == old_logprobs.size() && new_logprobs.size() == advantages.size(),
          "actor_loss: length mismatch");
  require(!advantages.empty(), "actor_loss: empty batch");
  double total = 0.0;
  for (std::size_t t = 0; t < advantages.size(); ++t) {
    const double ratio = std::exp(new_logprobs[t] - old_logprobs[t]);
    if (!std::isfinite(ratio)) throw NumericalError("actor_loss: non-finite importance ratio at sample " + std::to_string(t));
    const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    total += std::min(ratio * advantages[t], clipped * advantages[t]);
  }
  return -total / static_cast<double>(advantages.size());
}

double critic_loss(std::span<const double> predicted, std::span<const double> returns) {
  require(predicted.size() == returns.size(), "critic_loss: length mismatch");
  require(!predicted.empty(), "critic_loss: empty batch");
  double total = 0.0;
  for (std::size_t t = 0; t < predicted.size(); ++t) total += (predicted[t] - returns[t]) * (predicted[t] - returns[t]);
  return total / static_cast<double>(predicted.size());
}

// ---------------------------------------------------------------------------

namespace {

nn::MlpSpec encoder_spec(int input, const NetworkConfig& net) {
  nn::MlpSpec spec;
  spec.layer_widths.push_back(input);
  spec.layer_widths.insert(spec.layer_widths.end(), net.encoder_widths.begin(), net.encoder_widths.end());
  spec.activation = net.activation;
  spec.output_activation = net.activation;
  return spec;
}

nn::MlpSpec head_spec(int input, const NetworkConfig& net, int outputs) {
  return {{input, net.head_hidden, outputs}, net.activation, nn::Activation::none};
}

Matrix mix_groups(const Matrix& x, std::span<const Matrix> mixers) {
  Matrix out(x.rows(), x.cols());
  const Eigen::Index group = mixers.front().rows();
  for (std::size_t g = 0; g < mixers.size(); ++g) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(g) * group;
    out.middleRows(r0, group).noalias() = mixers[g] * x.middleRows(r0, group);
  }
  return out;
}

void check_batch(const BatchInput& batch, int obs_dim) {
  require(batch.group_size >= 1, "batch group_size must be positive");
  if (batch.obs.cols() != obs_dim)
    throw ShapeMismatch("observation width " + std::to_string(batch.obs.cols()) + ", expected " +
                        std::to_string(obs_dim));
  if (batch.obs.rows() != static_cast<Eigen::Index>(batch.adjacency.size()) * batch.group_size)
    throw ShapeMismatch("observation rows must equal steps × agents");
  for (const auto& a : batch.adjacency)
    if (static_cast<int>(a.size()) != batch.group_size) throw ShapeMismatch("adjacency size must equal agent count");
}

}  // namespace

Policy::Policy(Architecture arch, NetworkConfig net, int n_agents, int obs_dim, std::uint64_t seed)
    : arch_(arch), net_(std::move(net)), n_agents_(n_agents), obs_dim_(obs_dim) {
  require(n_agents >= 1 && obs_dim >= 1, "Policy: agent count and obs width must be positive");
  require(!net_.encoder_widths.empty(), "Policy: encoder needs at least one layer");
  require(net_.alpha >= 0.0 && net_.alpha <= 1.0, "Policy: alpha must lie in [0, 1]");
  Rng rng(seed);
  const int feat = net_.encoder_widths.back();
  const bool shared = arch_.variant == Variant::SharedBackbone;
  encoder_ = nn::Mlp(shared ? "backbone" : "actor_encoder", encoder_spec(obs_dim, net_), rng);
  actor_head_ = nn::Mlp("actor_head", head_spec(feat, net_, env::kNumActions), rng, std::sqrt(2.0),
                        net_.actor_output_gain);
  if (!shared) {
    const int critic_in = arch_.variant == Variant::GlobalCritic ? n_agents * obs_dim : obs_dim;
    critic_encoder_ = nn::Mlp("critic_encoder", encoder_spec(critic_in, net_), rng);
  }
  critic_head_ = nn::Mlp("critic_head", head_spec(feat, net_, 1), rng, std::sqrt(2.0), 1.0);
}

Matrix Policy::global_input(const Matrix& obs, int group_size) const {
  require(group_size >= 1 && obs.rows() % group_size == 0, "global_input: ragged groups");
  const Eigen::Index d = obs.cols();
  Matrix out(obs.rows(), d * group_size);
  for (Eigen::Index g = 0; g < obs.rows() / group_size; ++g) {
    const Eigen::Index r0 = g * group_size;
    for (Eigen::Index i = 0; i < group_size; ++i) {
      auto row = out.row(r0 + i);
      row.segment(0, d) = obs.row(r0 + i);
      Eigen::Index slot = 1;
      for (Eigen::Index j = 0; j < group_size; ++j) {
        if (j == i) continue;
        row.segment(slot * d, d) = obs.row(r0 + j);
        ++slot;
      }
    }
  }
  return out;
}

std::vector<Matrix> Policy::mixers(const BatchInput& batch) const {
  std::vector<Matrix> out;
  out.reserve(batch.adjacency.size());
  for (const auto& a : batch.adjacency) out.push_back(nn::mixing_matrix(a, net_.alpha));
  return out;
}

Policy::Output Policy::forward(const BatchInput& batch) const {
  check_batch(batch, obs_dim_);
  const bool aggr = arch_.aggregator_enabled;
  std::vector<Matrix> mix;
  if (aggr) mix = mixers(batch);

  Matrix features = encoder_.forward(batch.obs);
  if (aggr) features = mix_groups(features, mix);

  Output out;
  out.probs = nn::softmax_rows(actor_head_.forward(features));
  Matrix critic_features;
  switch (arch_.variant) {
    case Variant::SharedBackbone: critic_features = features; break;
    case Variant::IndividualCritic: critic_features = critic_encoder_->forward(batch.obs); break;
    case Variant::GlobalCritic:
      critic_features = critic_encoder_->forward(global_input(batch.obs, batch.group_size));
      break;
  }
  if (aggr && arch_.aggregate_critic && arch_.variant != Variant::SharedBackbone)
    critic_features = mix_groups(critic_features, mix);
  out.values = critic_head_.forward(critic_features).col(0);
  return out;
}

Policy::Output Policy::forward(const Matrix& obs, const AdjacencyMatrix& adj) const {
  BatchInput batch{obs, {adj}, static_cast<int>(adj.size())};
  return forward(batch);
}

Policy::TapeOutput Policy::forward(nn::Tape& tape, const BatchInput& batch) {
  check_batch(batch, obs_dim_);
  const bool aggr = arch_.aggregator_enabled;
  std::vector<Matrix> mix;
  if (aggr) mix = mixers(batch);

  nn::Var obs = tape.constant(batch.obs);
  nn::Var features = encoder_.forward(tape, obs);
  if (aggr) features = tape.block_mix(features, mix);

  const bool shared = arch_.variant == Variant::SharedBackbone;
  nn::Var actor_in = shared ? tape.stop_gradient(features) : features;
  TapeOutput out;
  out.log_probs = tape.log_softmax_rows(actor_head_.forward(tape, actor_in));

  nn::Var critic_features;
  switch (arch_.variant) {
    case Variant::SharedBackbone: critic_features = features; break;
    case Variant::IndividualCritic: critic_features = critic_encoder_->forward(tape, obs); break;
    case Variant::GlobalCritic:
      critic_features =
          critic_encoder_->forward(tape, tape.constant(global_input(batch.obs, batch.group_size)));
      break;
  }
  if (aggr && arch_.aggregate_critic && !shared) critic_features = tape.block_mix(critic_features, mix);
  out.values = critic_head_.forward(tape, critic_features);
  return out;
}

std::vector<nn::ParamTensor*> Policy::actor_params() {
  std::vector<nn::ParamTensor*> out;
  if (arch_.variant != Variant::SharedBackbone) out = encoder_.params();
  for (auto* p : actor_head_.params()) out.push_back(p);
  return out;
}

std::vector<nn::ParamTensor*> Policy::critic_params() {
  std::vector<nn::ParamTensor*> out;
  if (arch_.variant == Variant::SharedBackbone) out = encoder_.params();
  else out = critic_encoder_->params();
  for (auto* p : critic_head_.params()) out.push_back(p);
  return out;
}

std::vector<nn::ParamTensor*> Policy::encoder_params() { return encoder_.params(); }

std::vector<nn::ParamTensor*> Policy::critic_head_params() { return critic_head_.params(); }

std::vector<nn::ParamTensor*> Policy::all_params() {
  std::vector<nn::ParamTensor*> out = encoder_.params();
  for (auto* p : actor_head_.params()) out.push_back(p);
  if (critic_encoder_) for (auto* p : critic_encoder_->params()) out.push_back(p);
  for (auto* p : critic_head_.params()) out.push_back(p);
  return out;
}

std::vector<const nn::ParamTensor*> Policy::all_params() const {
  std::vector<const nn::ParamTensor*> out = encoder_.params();
  for (const auto* p : actor_head_.params()) out.push_back(p);
  if (critic_encoder_) for (const auto* p : critic_encoder_->params()) out.push_back(p);
  for (const auto* p : critic_head_.params()) out.push_back(p);
  return out;
}

void Policy::zero_grad() {
  for (auto* p : all_params()) p->zero_grad();
}

// ---------------------------------------------------------------------------

void Adam::step(std::span<nn::ParamTensor* const> params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  require(m_.size() == params.size(), "Adam: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::ParamTensor& p = *params[k];
    if (p.grad.rows() != m_[k].rows() || p.grad.cols() != m_[k].cols())
      throw ShapeMismatch("Adam: parameter shape changed for " + p.name);
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * p.grad;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + eps_);
  }
}

double clip_grad_norm(std::span<nn::ParamTensor* const> params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto* p : params) p->grad *= s;
  }
  return norm;
}

UpdateBatch make_batch(std::span<const Rollout> rollouts, const TrainConfig& config) {
  require(!rollouts.empty(), "make_batch: no rollouts");
  const int n = rollouts.front().n_agents();
  require(n >= 1, "make_batch: empty trajectory");
  std::size_t groups = 0;
  Eigen::Index obs_dim = 0;
  for (const auto& r : rollouts) {
    require(!r.steps.empty(), "make_batch: empty trajectory");
    require(r.n_agents() == n, "make_batch: agent count differs between rollouts");
    require(static_cast<int>(r.final_values.size()) == n, "make_batch: missing final values");
    groups += r.steps.size();
    obs_dim = r.steps.front().obs.cols();
  }

  UpdateBatch batch;
  batch.input.group_size = n;
  batch.input.obs.resize(static_cast<Eigen::Index>(groups) * n, obs_dim);
  batch.input.adjacency.reserve(groups);
  const std::size_t rows = groups * static_cast<std::size_t>(n);
  batch.actions.reserve(rows);
  batch.old_logprobs.reserve(rows);
  batch.returns.assign(rows, 0.0);
  batch.advantages.assign(rows, 0.0);

  std::size_t group0 = 0;
  for (const auto& r : rollouts) {
    const std::size_t steps = r.steps.size();
    for (int i = 0; i < n; ++i) {
      std::vector<double> rewards(steps), values(steps);
      for (std::size_t t = 0; t < steps; ++t) {
        rewards[t] = r.steps[t].rewards[static_cast<std::size_t>(i)];
        values[t] = r.steps[t].values[static_cast<std::size_t>(i)];
      }
      const double final_value = r.final_values[static_cast<std::size_t>(i)];
      std::vector<double> ret, adv;
      if (config.advantage_mode == AdvantageMode::monte_carlo) {
        ret = compute_returns(rewards, final_value, config.gamma);
        adv = compute_advantage(ret, values);
      } else {
        adv = compute_gae(rewards, values, final_value, config.gamma, config.gae_lambda);
        ret.resize(steps);
        for (std::size_t t = 0; t < steps; ++t) ret[t] = adv[t] + values[t];
      }
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t row = (group0 + t) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i);
        batch.returns[row] = ret[t];
        batch.advantages[row] = adv[t];
      }
    }
    for (std::size_t t = 0; t < steps; ++t) {
      const StepRecord& s = r.steps[t];
      if (s.obs.rows() != n || s.obs.cols() != obs_dim) throw ShapeMismatch("make_batch: ragged observations");
      batch.input.obs.middleRows(static_cast<Eigen::Index>(group0 + t) * n, n) = s.obs;
      batch.input.adjacency.push_back(s.adj);
      batch.actions.insert(batch.actions.end(), s.actions.begin(), s.actions.end());
      batch.old_logprobs.insert(batch.old_logprobs.end(), s.logprobs.begin(), s.logprobs.end());
    }
    group0 += steps;
  }
  if (config.normalize_advantage) normalize_in_place(batch.advantages);
  return batch;
}

namespace {

Matrix column(std::span<const double> xs) {
  Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t k = 0; k < xs.size(); ++k) m(static_cast<Eigen::Index>(k), 0) = xs[k];
  return m;
}

}  // namespace

LossEvaluation compute_gradients(Policy& policy, const UpdateBatch& batch, const TrainConfig& config,
                                 LossWeights weights) {
  require(batch.rows() > 0, "compute_gradients: empty batch");
  require(batch.old_logprobs.size() == batch.rows() && batch.returns.size() == batch.rows() &&
              batch.advantages.size() == batch.rows(),
          "compute_gradients: ragged batch");
  policy.zero_grad();
  nn::Tape tape;
  const Policy::TapeOutput out = policy.forward(tape, batch.input);

  // Actor branch.
  nn::Var new_lp = tape.pick(out.log_probs, batch.actions);
  nn::Var ratio = tape.exp(tape.sub(new_lp, tape.constant(column(batch.old_logprobs))));
  nn::Var adv = tape.constant(column(batch.advantages));
  nn::Var surr1 = tape.mul(ratio, adv);
  nn::Var surr2 = tape.mul(tape.clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon), adv);
  nn::Var surr = tape.minimum(surr1, surr2);
  nn::Var actor = tape.scale(tape.mean(surr), -1.0);
  nn::Var plogp = tape.mul(tape.exp(out.log_probs), out.log_probs);
  nn::Var entropy = tape.scale(tape.mean(tape.row_sum(plogp)), -1.0);
  nn::Var actor_total = tape.sub(actor, tape.scale(entropy, config.entropy_coeff));

  // Critic branch.
  nn::Var diff = tape.sub(out.values, tape.constant(column(batch.returns)));
  nn::Var critic = tape.mean(tape.square(diff));

  nn::Var total = tape.add(tape.scale(actor_total, weights.actor), tape.scale(critic, weights.critic));

  LossEvaluation eval;
  const Matrix& r = tape.value(ratio);
  eval.ratios.assign(r.data(), r.data() + r.size());
  for (std::size_t k = 0; k < eval.ratios.size(); ++k) {
    if (!std::isfinite(eval.ratios[k]))
      throw NumericalError("non-finite importance ratio at sample " + std::to_string(k) +
                           " (new logprob " + std::to_string(tape.value(new_lp)(static_cast<Eigen::Index>(k), 0)) +
                           ", old logprob " + std::to_string(batch.old_logprobs[k]) + ")");
  }
  const Matrix& s1 = tape.value(surr1);
  const Matrix& s2 = tape.value(surr2);
  const Matrix& s = tape.value(surr);
  for (Eigen::Index k = 0; k < s.rows(); ++k)
    if (s(k, 0) > s1(k, 0) || s(k, 0) > s2(k, 0)) ++eval.surrogate_violations;

  eval.actor_loss = tape.scalar(actor);
  eval.critic_loss = tape.scalar(critic);
  eval.entropy = tape.scalar(entropy);
  if (!std::isfinite(eval.actor_loss) || !std::isfinite(eval.critic_loss) || !std::isfinite(eval.entropy)) {
    std::ostringstream msg;
    msg << "non-finite loss (actor " << eval.actor_loss << ", critic " << eval.critic_loss << ", entropy "
        << eval.entropy << ")";
    throw NumericalError(msg.str());
  }
  tape.backward(total);
  return eval;
}

UpdateStats update(Policy& policy, Optimizers& optimizers, const UpdateBatch& batch,
                   const TrainConfig& config, LossWeights weights) {
  config.validate();
  require(batch.rows() > 0, "update: empty trajectory");
  UpdateStats stats;
  auto actor_params = policy.actor_params();
  auto critic_params = policy.critic_params();
  for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
    const LossEvaluation eval = compute_gradients(policy, batch, config, weights);
    if (eval.surrogate_violations != 0)
      throw NumericalError("clipped surrogate exceeded one of its arguments on " +
                           std::to_string(eval.surrogate_violations) + " samples");
    if (epoch == 0) {
      for (double r : eval.ratios) stats.first_epoch_ratio_error = std::max(stats.first_epoch_ratio_error, std::abs(r - 1.0));
    }
    clip_grad_norm(actor_params, config.grad_clip_norm);
    clip_grad_norm(critic_params, config.grad_clip_norm);
    optimizers.actor.step(actor_params);
    optimizers.critic.step(critic_params);
    stats.actor_loss = eval.actor_loss;
    stats.critic_loss = eval.critic_loss;
    stats.entropy = eval.entropy;
    ++stats.epochs;
  }
  for (const auto* p : policy.all_params())
    if (!p->value.allFinite()) throw NumericalError("parameter " + p->name + " became non-finite");
  return stats;
}

UpdateStats update(Policy& policy, Optimizers& optimizers, std::vector<Rollout>& rollouts,
                   const TrainConfig& config, LossWeights weights) {
  require(!rollouts.empty(), "update: empty trajectory");
  const UpdateBatch batch = make_batch(rollouts, config);
  UpdateStats stats = update(policy, optimizers, batch, config, weights);
  rollouts.clear();
  return stats;
}

}  // namespace uavcov::ppo
