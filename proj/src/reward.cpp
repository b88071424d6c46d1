#include "crowdsim/reward.hpp"

#include <cassert>
#include <cmath>

namespace crowdsim {

StepRewardBreakdown step_reward(const AgentState& prev, const AgentState& cur,
                                int collision_count, const RewardConfig& cfg) {
  StepRewardBreakdown r;
  if (prev.reached_goal) return r;  // task complete, all components stop
  r.progress = cfg.c_p * (prev.distance_to_goal() - cur.distance_to_goal());
  r.speed = -cfg.c_v * std::pow(std::abs(cur.velocity.norm() - cfg.v_0), cfg.c_e);
  r.collision = -cfg.c_c * collision_count;
  r.urgency = -cfg.c_t;
  if (cur.reached_goal) r.goal = cfg.c_g;
  return r;
}

double energy_step(double speed, double dt, const EnergyModel& model) {
  assert(speed >= 0.0);
  return (model.e_s + model.e_w * speed * speed) * dt;
}

void EpisodeLog::start(int agents, double decision_dt) {
  n_agents = agents;
  dt = decision_dt;
  per_agent.assign(agents, {});
  pair_events_per_step.clear();
  reached.assign(agents, 0);
  episode_steps = 0;
}

void EpisodeLog::record_step(std::span<const Vec2> actions, const WorldState& world_after,
                             std::span<const StepRewardBreakdown> rewards,
                             std::span<const int> collisions, int pair_events,
                             std::span<const std::uint8_t> was_reached) {
  for (int i = 0; i < n_agents; ++i) {
    StepRecord rec;
    rec.action = actions[i];
    rec.speed = world_after.agents[i].velocity.norm();
    rec.collisions = collisions[i];
    rec.reward = rewards[i];
    rec.was_reached = was_reached[i] != 0;
    per_agent[i].push_back(rec);
    reached[i] = world_after.agents[i].reached_goal ? 1 : 0;
  }
  pair_events_per_step.push_back(pair_events);
  ++episode_steps;
}

Metrics episode_metrics(const EpisodeLog& log, const EnergyModel& model) {
  Metrics m;
  m.episode_steps = log.episode_steps;
  if (log.n_agents == 0) return m;

  double moving_speed_sum = 0.0;
  long moving_steps = 0;
  for (int i = 0; i < log.n_agents; ++i) {
    double energy = 0.0;
    StepRewardBreakdown sums;
    for (const auto& rec : log.per_agent[i]) {
      energy += energy_step(rec.speed, log.dt, model);
      sums += rec.reward;
      if (!rec.was_reached && rec.speed >= 0.1) {
        moving_speed_sum += rec.speed;
        ++moving_steps;
      }
    }
    m.energy_mean += energy;
    m.reward_goal += sums.goal;
    m.reward_progress += sums.progress;
    m.reward_speed += sums.speed;
    m.reward_collision += sums.collision;
    m.reward_urgency += sums.urgency;
    m.reward_total += sums.total();
    m.success_rate += log.reached[i] ? 1.0 : 0.0;
  }
  const double n = log.n_agents;
  m.energy_mean /= n;
  m.reward_goal /= n;
  m.reward_progress /= n;
  m.reward_speed /= n;
  m.reward_collision /= n;
  m.reward_urgency /= n;
  m.reward_total /= n;
  m.success_rate /= n;
  m.mean_speed_moving = moving_steps > 0 ? moving_speed_sum / moving_steps : 0.0;
  for (int c : log.pair_events_per_step) m.collision_count += c;
  return m;
}

}  // namespace crowdsim
