#pragma once

// MAPPO training: rollout collection over parallel environments, credit
// substitution, GAE, PPO-clip with adaptive KL, clipped value loss and the
// world-dynamics auxiliary losses.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "active_mocap/environment.hpp"
#include "active_mocap/policy_network.hpp"

namespace active_mocap::marl {

using neural::Matrix;

// Piecewise-linear in environment steps. At a repeated step the later point
// wins; past the last point the last value holds.
struct LrSchedule {
  std::vector<std::pair<double, double>> points;

  double at(double step) const;
};

struct WdlCoefficients {
  double self = 1.0;
  double peer = 1.0;
  double reward = 1.0;
  double target = 1.0;
  double pedestrian = 0.1;
};

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 1.0;
  double clip = 0.3;
  double ppo_coef = 1.0;
  double kl_coef = 0.2;
  double kl_target = 0.01;
  double entropy_coef = 0.0;
  double value_coef = 0.1;
  double value_clip = 1000.0;
  double grad_clip = 50.0;
  int fragment = 25;
  int rollouts = 4;
  int batch = 100;      // joint steps per iteration = rollouts * fragment
  int minibatch = 50;   // joint steps per SGD step
  int sgd_iters = 16;
  LrSchedule lr{{{0, 5e-4}, {200e3, 5e-4}, {200e3, 1e-4}, {400e3, 1e-4}, {600e3, 5e-5}, {600e3, 5e-5}}};
  bool use_wdl = true;
  double wdl_coef = 1.0;
  WdlCoefficients wdl{};
  // Critic regresses the team return; otherwise each agent's own return.
  bool critic_team_reward = true;
  bool standardize_advantages = true;
  int64_t total_steps = 150000;  // joint environment steps
  int checkpoint_every = 100;    // iterations; 0 keeps only first and last
  int threads = 0;               // 0: ACTIVE_MOCAP_THREADS or hardware

  static TrainConfig desk();
  static TrainConfig paper();
  int iterations() const;
  // Throws ConfigError.
  void validate() const;
};

// Algorithm tuple for one agent at one joint step, plus what the update
// needs from collection time.
struct Transition {
  std::vector<double> obs, next_obs;
  world::AgentAction action;
  double reward = 0.0;
  std::vector<double> hidden_prev;
  // Shared by the joint step.
  std::vector<double> state_summary;
  std::vector<world::AgentAction> prev_joint_action;
  double team_reward = 0.0;

  std::vector<double> old_probs;  // 3F per-factor probabilities before masking
  std::optional<safety::TranslationMask> mask;
  double logp = 0.0;
  double value = 0.0;
  DynamicsLabels labels;
  bool done = false;
};

// Row g * n + i holds agent i of joint step g.
struct TrainingBatch {
  int num_agents = 0;
  int groups = 0;
  Matrix obs, hidden, actions, old_probs;
  neural::Vector logp_old, value_old, advantages, value_targets, team_rewards;
  std::vector<std::optional<safety::TranslationMask>> masks;
  std::vector<DynamicsLabels> labels;

  int rows() const { return groups * num_agents; }
  // Rows of the listed groups, in order.
  TrainingBatch select(std::span<const int> group_ids) const;
};

// Discounted advantage estimates; `dones[t]` cuts the bootstrap after t.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double bootstrap, double gamma, double lambda,
                        std::span<const uint8_t> dones = {});

// Environments, recurrent state and RNG streams that persist across
// iterations.
struct RolloutWorkers {
  std::vector<Environment> envs;
  std::vector<Matrix> hidden;  // per env, n x H
  std::vector<std::vector<world::AgentAction>> prev_actions;
  std::vector<std::mt19937_64> rngs;

  RolloutWorkers(const EnvConfig& cfg, int count, uint64_t seed, int hidden_size);
};

struct RolloutStats {
  double mean_mpjpe_mm = 0.0;
  double mean_team_reward = 0.0;
  double mean_agent_reward = 0.0;
  double mean_min_distance = 0.0;
  int episodes_finished = 0;
};

struct Rollout {
  std::vector<Transition> transitions;  // [env][t][agent] flattened
  TrainingBatch batch;                  // groups ordered by (env, t)
  RolloutStats stats;
};

Rollout collect_rollouts(RolloutWorkers& workers, const neural::PolicyNetwork& net,
                         const TrainConfig& cfg);

// Unmasked factored distribution of one row of `probs` (B x 3F).
neural::ActionDistribution policy_distribution(const Matrix& probs, int row, int num_factors);

// Log-probability of the taken action, KL(old || new) and entropy of one
// row, with their gradients with respect to the new logits (3F each).
// Translation factors use the masked joint when `mask` is set; the entropy
// is that of the unmasked factors.
struct PolicyTerms {
  double logp = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  std::vector<double> dlogp, dkl, dentropy;
};

PolicyTerms policy_terms(const double* p_new, const double* p_old, const double* onehot, int F,
                         const std::optional<safety::TranslationMask>& mask);

struct EpochStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double loss_self = 0.0;
  double loss_reward = 0.0;
  double loss_peer = 0.0;
  double loss_target = 0.0;
  double loss_pedestrian = 0.0;
  double total_loss = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  double kl_coef = 0.0;  // after the adaptive update
};

struct TrainerState {
  double kl_coef = 0.2;
  int64_t env_steps = 0;
  int iteration = 0;
  std::mt19937_64 rng{0};
};

// Adaptive KL rule: double above 2*target, halve below target/2.
double update_kl_coef(double coef, double measured_kl, double target);

// One PPO update over the batch. Throws NonFiniteLoss.
EpochStats train_epoch(const TrainingBatch& batch, neural::PolicyNetwork& net, neural::Adam& opt,
                       TrainerState& state, const TrainConfig& cfg);

struct RunConfig {
  EnvConfig env{};
  neural::ModelConfig model{};
  TrainConfig train{};
  uint64_t seed = 0;

  // Makes model shape fields agree with the environment. Throws ConfigError.
  void resolve();
};

struct TrainResult {
  std::vector<std::string> checkpoints;
  std::string metrics_path;
  std::string final_checkpoint;
};

// Collect/update loop. Writes ckpt_<iteration>.bin, final.bin and
// metrics.jsonl under `out_dir`. Errors are rethrown with the iteration.
TrainResult train(const RunConfig& run, const std::string& out_dir,
                  const std::function<void(const std::string&)>& progress = {});

// ACTIVE_MOCAP_THREADS when set, else hardware concurrency.
int worker_threads(int requested = 0);

// Runs fn(0..n-1) on up to `threads` threads; rethrows the first failure.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace active_mocap::marl
