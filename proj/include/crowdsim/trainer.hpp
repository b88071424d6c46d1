#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "crowdsim/env.hpp"
#include "crowdsim/policy.hpp"

namespace crowdsim {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch_size = 256;
  double learning_rate = 3e-4;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;   // global-norm gradient clip; <= 0 disables
  int steps_per_iteration = 1024;  // decision steps per world
  int n_parallel_worlds = 2;
  std::uint64_t seed = 1;
  MlpSpec trunk{{64, 64}};
  MlpSpec psi{{64}};
  MlpSpec phi{{64}};
};

struct Transition {
  int world = 0;
  int agent = 0;
  Observation obs;
  Vec2 action;            // pre-clamp Gaussian sample
  double log_prob = 0.0;
  double reward = 0.0;    // summed components
  double value = 0.0;
  bool done = false;      // individual goal-reach (terminal for credit)
};

struct RolloutBuffer {
  std::vector<Transition> transitions;
  // Contiguous per-(world, agent, episode) index runs; truncated segments
  // carry the value bootstrap of their successor state.
  struct Segment {
    std::vector<int> idx;
    double bootstrap = 0.0;
  };
  std::vector<Segment> segments;
  std::vector<double> advantages;  // aligned with transitions
  std::vector<double> returns;
  // Episodes that terminated during collection.
  std::vector<Metrics> finished_episodes;
};

// delta_t = r_t + gamma*v_{t+1}*(1-done_t) - v_t, with v_{T} = bootstrap;
// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}; returns = A + v.
void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const std::uint8_t> dones, double bootstrap, double gamma,
                 double lambda, std::span<double> advantages, std::span<double> returns);

struct UpdateStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double advantage_mean = 0.0;
  double advantage_std = 0.0;
  bool aborted = false;  // non-finite loss; params restored
};

struct IterationRow {
  int iteration = 0;
  int transitions = 0;
  int episodes = 0;  // completed this iteration
  double reward_total = 0.0, reward_goal = 0.0, reward_progress = 0.0;
  double reward_speed = 0.0, reward_collision = 0.0, reward_urgency = 0.0;
  double energy = 0.0, success = 0.0, collisions = 0.0, mean_speed = 0.0;
  double loss = 0.0, policy_loss = 0.0, value_loss = 0.0, entropy = 0.0;
  double clip_fraction = 0.0, approx_kl = 0.0;
};

struct TrainingLog {
  std::vector<IterationRow> rows;
};

// Shared-policy multi-world PPO. All agents in all worlds act through the
// single PolicyParams instance owned here.
class Trainer {
 public:
  Trainer(EnvConfig env_cfg, PpoConfig ppo_cfg);

  RolloutBuffer collect_rollouts();
  UpdateStats ppo_update(RolloutBuffer& buffer);
  IterationRow run_iteration();

  PolicyParams& params() { return params_; }
  const PolicyParams& params() const { return params_; }
  const TrainingLog& log() const { return log_; }

 private:
  void finish_segments_for_world(int w, bool value_bootstrap);

  EnvConfig env_cfg_;
  PpoConfig cfg_;
  PolicyParams params_;
  std::vector<Environment> worlds_;
  std::vector<std::mt19937_64> world_rngs_;
  std::vector<std::uint64_t> reset_counters_;
  std::mt19937_64 update_rng_;
  std::vector<double> adam_m_, adam_v_;
  int adam_t_ = 0;
  int iteration_ = 0;
  TrainingLog log_;
  IterationRow last_episode_stats_;  // carried forward when none finish
  // open segment per (world, agent), -1 when closed
  std::vector<std::vector<int>> open_segment_;
  RolloutBuffer* collecting_ = nullptr;
};

struct TrainResult {
  PolicyParams params;
  TrainingLog log;
};

using IterationCallback = std::function<void(const IterationRow&, const PolicyParams&)>;

TrainResult train(const EnvConfig& env_cfg, const PpoConfig& ppo_cfg, int n_iterations,
                  const IterationCallback& callback = {});

enum class ActionMode { mean, sample };

// Runs n_episodes with fresh scenario seeds and no learning.
std::vector<Metrics> evaluate(const PolicyParams& params, const EnvConfig& env_cfg,
                              int n_episodes, ActionMode mode, std::uint64_t base_seed);

// Deterministic seed stream derivation.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace crowdsim
