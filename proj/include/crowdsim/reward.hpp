#pragma once

#include <cmath>
#include <vector>

#include "crowdsim/sim.hpp"

namespace crowdsim {

struct RewardConfig {
  double c_g = 10.0;    // goal bonus, paid once
  double c_p = 1.0;     // progress
  double c_v = 0.75;    // speed deviation
  double c_e = 1.0;     // speed deviation exponent
  double c_c = 0.05;    // per-collision penalty
  double c_t = 0.005;   // per-step urgency penalty
  double v_0 = 1.33;    // m/s, preferred speed
  double gamma = 0.99;  // discount (used by the return analysis and GAE)
};

// Metabolic cost e_s + e_w * v^2 per second per kilogram.
struct EnergyModel {
  double e_s = 2.23;  // J/(kg*s)
  double e_w = 1.26;  // J*s/(kg*m^2)

  double optimal_speed() const { return std::sqrt(e_s / e_w); }
};

struct StepRewardBreakdown {
  double goal = 0.0;
  double progress = 0.0;
  double speed = 0.0;
  double collision = 0.0;
  double urgency = 0.0;

  double total() const { return goal + progress + speed + collision + urgency; }
  StepRewardBreakdown& operator+=(const StepRewardBreakdown& o) {
    goal += o.goal;
    progress += o.progress;
    speed += o.speed;
    collision += o.collision;
    urgency += o.urgency;
    return *this;
  }
};

// Per-step reward for one agent. collision_count is the number of collision
// pairs involving this agent this decision step. Agents that had already
// reached their goal before the step receive all-zero components.
StepRewardBreakdown step_reward(const AgentState& prev, const AgentState& cur,
                                int collision_count, const RewardConfig& cfg);

// Energy spent over dt seconds at the given speed, J/kg.
double energy_step(double speed, double dt, const EnergyModel& model);

// Compact per-episode record; one entry per (decision step, agent).
struct EpisodeLog {
  int n_agents = 0;
  double dt = 1.0 / 12.0;

  struct StepRecord {
    Vec2 action;
    double speed = 0.0;          // |velocity| after the step
    int collisions = 0;          // pairs involving this agent
    StepRewardBreakdown reward;
    bool was_reached = false;    // reached before this step began
  };
  std::vector<std::vector<StepRecord>> per_agent;  // [agent][step]
  std::vector<int> pair_events_per_step;
  std::vector<std::uint8_t> reached;               // final flags
  int episode_steps = 0;

  void start(int agents, double decision_dt);
  void record_step(std::span<const Vec2> actions, const WorldState& world_after,
                   std::span<const StepRewardBreakdown> rewards,
                   std::span<const int> collisions, int pair_events,
                   std::span<const std::uint8_t> was_reached);
};

struct Metrics {
  double energy_mean = 0.0;        // mean per-agent total energy, J/kg
  double success_rate = 0.0;
  double collision_count = 0.0;    // total pair events over the episode
  double mean_speed_moving = 0.0;  // mean |v| over pre-goal steps with |v| >= 0.1
  double reward_goal = 0.0;        // per-agent means of undiscounted sums
  double reward_progress = 0.0;
  double reward_speed = 0.0;
  double reward_collision = 0.0;
  double reward_urgency = 0.0;
  double reward_total = 0.0;
  int episode_steps = 0;
};

Metrics episode_metrics(const EpisodeLog& log, const EnergyModel& model);

}  // namespace crowdsim
