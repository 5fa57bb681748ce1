#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uavcov/adjacency.hpp"
#include "uavcov/env.hpp"
#include "uavcov/nn.hpp"

namespace uavcov::ppo {

using nn::Matrix;

enum class Variant { IndividualCritic, GlobalCritic, SharedBackbone };

std::string to_string(Variant v);
/// Accepts "IndividualCritic", "individual-critic", "individual" and the
/// same forms for the other variants.
Variant parse_variant(std::string_view text);

struct Architecture {
  Variant variant = Variant::SharedBackbone;
  bool aggregator_enabled = true;
  /// Non-shared variants only: also pass the critic encoder output through
  /// the aggregator. Off by default (the aggregator feeds the actor).
  bool aggregate_critic = false;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct NetworkConfig {
  std::vector<int> encoder_widths{128, 64};
  int head_hidden = 64;
  double alpha = 0.5;
  nn::Activation activation = nn::Activation::tanh;
  /// Orthogonal-init gain on the last actor layer.
  double actor_output_gain = 0.01;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class AdvantageMode { monte_carlo, gae };

struct TrainConfig {
  double gamma = 0.99;
  double clip_epsilon = 0.2;
  int update_epochs = 4;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  AdvantageMode advantage_mode = AdvantageMode::monte_carlo;
  double gae_lambda = 0.95;
  double entropy_coeff = 0.0;
  double grad_clip_norm = 0.5;
  bool normalize_advantage = true;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Experience.

/// One agent's view of one environment step.
struct Transition {
  env::Observation obs;
  AdjacencyMatrix adj;
  int action = 0;
  double action_logprob = 0.0;
  double reward = 0.0;
  double value = 0.0;
};

/// All agents of one environment at one step.
struct StepRecord {
  Matrix obs;  // N × obs_dim
  AdjacencyMatrix adj;
  std::vector<int> actions;
  std::vector<double> logprobs;
  std::vector<double> rewards;
  std::vector<double> values;
};

/// One finished episode from one environment.
struct Rollout {
  std::vector<StepRecord> steps;
  /// Critic value of the state reached after the last step, per agent.
  std::vector<double> final_values;

  int n_agents() const { return steps.empty() ? 0 : static_cast<int>(steps.front().actions.size()); }
  Transition transition(int step, int agent) const;
};

// ---------------------------------------------------------------------------
// Formulas.

/// R_t = r_t + γ·R_{t+1}, seeded with R_T = final_value.
std::vector<double> compute_returns(std::span<const double> rewards, double final_value, double gamma);

/// returns − values.
std::vector<double> compute_advantage(std::span<const double> returns, std::span<const double> values);

/// Generalized advantage estimate with V(s_T) = final_value.
std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                double final_value, double gamma, double lambda);

/// Shifts to zero mean and scales to unit population std. A constant batch
/// is only centred.
void normalize_in_place(std::span<double> xs);

/// −mean(min(IS·A, clip(IS, 1−ε, 1+ε)·A)), IS = exp(new − old).
double actor_loss(std::span<const double> new_logprobs, std::span<const double> old_logprobs,
                  std::span<const double> advantages, double clip_epsilon);

/// mean((predicted − returns)²).
double critic_loss(std::span<const double> predicted, std::span<const double> returns);

// ---------------------------------------------------------------------------
// Networks.

/// Inputs for a batched forward pass: `groups` blocks of `group_size` agent
/// rows, each block from one environment step.
struct BatchInput {
  Matrix obs;
  std::vector<AdjacencyMatrix> adjacency;
  int group_size = 0;
};

/// Weights of one architecture. Every agent shares this single set.
class Policy {
 public:
  Policy(Architecture arch, NetworkConfig net, int n_agents, int obs_dim, std::uint64_t seed);

  struct Output {
    Matrix probs;           // rows × 17
    Eigen::VectorXd values; // rows
  };

  /// Read-only inference on one or more environment steps.
  Output forward(const BatchInput& batch) const;
  Output forward(const Matrix& obs, const AdjacencyMatrix& adj) const;

  struct TapeOutput {
    nn::Var log_probs;  // rows × 17
    nn::Var values;     // rows × 1
  };

  /// Recorded forward pass. For SharedBackbone the actor head reads the
  /// backbone through a stop-gradient, so only critic loss reaches it.
  TapeOutput forward(nn::Tape& tape, const BatchInput& batch);

  /// Critic input for a global critic: for each agent, its own row first,
  /// then the other rows of its group in index order.
  Matrix global_input(const Matrix& obs, int group_size) const;

  const Architecture& architecture() const { return arch_; }
  const NetworkConfig& network() const { return net_; }
  int n_agents() const { return n_agents_; }
  int obs_dim() const { return obs_dim_; }

  /// Parameters stepped by the actor optimizer.
  std::vector<nn::ParamTensor*> actor_params();
  /// Parameters stepped by the critic optimizer (includes the shared
  /// backbone for SharedBackbone).
  std::vector<nn::ParamTensor*> critic_params();
  /// Backbone (SharedBackbone) or actor encoder parameters.
  std::vector<nn::ParamTensor*> encoder_params();
  std::vector<nn::ParamTensor*> critic_head_params();
  std::vector<nn::ParamTensor*> all_params();
  std::vector<const nn::ParamTensor*> all_params() const;

  void zero_grad();

 private:
  std::vector<Matrix> mixers(const BatchInput& batch) const;

  Architecture arch_;
  NetworkConfig net_;
  int n_agents_;
  int obs_dim_;
  nn::Mlp encoder_;
  nn::Mlp actor_head_;
  std::optional<nn::Mlp> critic_encoder_;
  nn::Mlp critic_head_;
};

// ---------------------------------------------------------------------------
// Optimization.

/// Adam with per-parameter first and second moments.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one step from each tensor's current grad. The tensor list must
  /// be the same (in order and shape) across calls.
  void step(std::span<nn::ParamTensor* const> params);

  double learning_rate() const { return lr_; }
  long steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Scales grads so their joint L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
double clip_grad_norm(std::span<nn::ParamTensor* const> params, double max_norm);

/// Flattened training batch with per-row targets.
struct UpdateBatch {
  BatchInput input;
  std::vector<int> actions;
  std::vector<double> old_logprobs;
  std::vector<double> returns;
  std::vector<double> advantages;

  std::size_t rows() const { return actions.size(); }
};

/// Assembles rows (env, step, agent) and computes returns and advantages.
UpdateBatch make_batch(std::span<const Rollout> rollouts, const TrainConfig& config);

/// Relative weights on each loss term when building gradients.
struct LossWeights {
  double actor = 1.0;
  double critic = 1.0;
};

struct LossEvaluation {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  std::vector<double> ratios;
  /// Number of samples where min(IS·A, clip(IS)·A) exceeded either argument.
  std::size_t surrogate_violations = 0;
};

/// Zeroes grads, runs forward and backward, and leaves ∂loss/∂θ in every
/// parameter's grad. Throws NumericalError on a non-finite ratio or loss.
LossEvaluation compute_gradients(Policy& policy, const UpdateBatch& batch, const TrainConfig& config,
                                 LossWeights weights = {});

struct Optimizers {
  Adam actor;
  Adam critic;

  explicit Optimizers(const TrainConfig& config) : actor(config.actor_lr), critic(config.critic_lr) {}
};

struct UpdateStats {
  double actor_loss = 0.0;   // last epoch
  double critic_loss = 0.0;  // last epoch
  double entropy = 0.0;
  /// max |IS − 1| over samples in the first epoch.
  double first_epoch_ratio_error = 0.0;
  int epochs = 0;
};

/// Runs `update_epochs` full-batch PPO epochs on the rollouts, then clears
/// them.
UpdateStats update(Policy& policy, Optimizers& optimizers, std::vector<Rollout>& rollouts,
                   const TrainConfig& config, LossWeights weights = {});

/// Same as above on an already assembled batch.
UpdateStats update(Policy& policy, Optimizers& optimizers, const UpdateBatch& batch,
                   const TrainConfig& config, LossWeights weights = {});

}  // namespace uavcov::ppo
