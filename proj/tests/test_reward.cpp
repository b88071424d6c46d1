#include <doctest.h>

#include <cmath>
#include <random>

#include "crowdsim/reward.hpp"

using namespace crowdsim;

namespace {

AgentState at(Vec2 p, Vec2 v = {}, Vec2 goal = {10, 0}, bool reached = false) {
  AgentState a;
  a.position = p;
  a.velocity = v;
  a.goal = goal;
  a.reached_goal = reached;
  return a;
}

EpisodeLog constant_speed_log(int n_agents, int steps, double speed, double dt = 1.0 / 12) {
  EpisodeLog log;
  log.start(n_agents, dt);
  for (int s = 0; s < steps; ++s) {
    for (int i = 0; i < n_agents; ++i) {
      EpisodeLog::StepRecord rec;
      rec.speed = speed;
      log.per_agent[i].push_back(rec);
    }
    log.pair_events_per_step.push_back(0);
    ++log.episode_steps;
  }
  return log;
}

}  // namespace

TEST_CASE("moving at v_0 straight toward the goal: only progress and urgency") {
  RewardConfig cfg;
  const double dt = 1.0 / 12;
  const AgentState prev = at({0, 0}, {cfg.v_0, 0});
  const AgentState cur = at({cfg.v_0 * dt, 0}, {cfg.v_0, 0});
  const StepRewardBreakdown r = step_reward(prev, cur, 0, cfg);
  CHECK(r.goal == 0.0);
  CHECK(r.progress == doctest::Approx(cfg.c_p * cfg.v_0 * dt));
  CHECK(r.speed == doctest::Approx(0.0));
  CHECK(r.collision == 0.0);
  CHECK(r.urgency == doctest::Approx(-cfg.c_t));
  CHECK(r.total() == doctest::Approx(r.progress + r.urgency));
}

TEST_CASE("goal bonus is paid exactly once") {
  RewardConfig cfg;
  AgentState prev = at({9.6, 0});
  AgentState cur = at({9.7, 0});
  cur.reached_goal = true;  // newly crossed the threshold
  const StepRewardBreakdown reach = step_reward(prev, cur, 0, cfg);
  CHECK(reach.goal == doctest::Approx(10.0));

  // every later step: prev already reached, all components zero
  const StepRewardBreakdown after = step_reward(cur, cur, 3, cfg);
  CHECK(after.goal == 0.0);
  CHECK(after.progress == 0.0);
  CHECK(after.speed == 0.0);
  CHECK(after.collision == 0.0);
  CHECK(after.urgency == 0.0);
}

TEST_CASE("stationary agent with defaults loses 1.0025 per step") {
  RewardConfig cfg;  // c_e = 1
  const AgentState s = at({0, 0});
  const StepRewardBreakdown r = step_reward(s, s, 0, cfg);
  CHECK(r.total() == doctest::Approx(-(0.75 * 1.33 + 0.005)));
  CHECK(r.total() == doctest::Approx(-1.0025));
}

TEST_CASE("collision component counts pairs involving the agent") {
  RewardConfig cfg;
  const AgentState s = at({0, 0});
  const StepRewardBreakdown r = step_reward(s, s, 2, cfg);
  CHECK(r.collision == doctest::Approx(-2.0 * cfg.c_c));
}

TEST_CASE("energy_step examples") {
  const EnergyModel m;
  CHECK(energy_step(0.0, 1.0, m) == doctest::Approx(2.23));
  CHECK(energy_step(1.3304, 1.0, m) == doctest::Approx(4.460).epsilon(1e-3));
  CHECK(energy_step(2.0, 1.0 / 12, m) == doctest::Approx((2.23 + 5.04) / 12.0));
  CHECK(m.optimal_speed() == doctest::Approx(1.3304).epsilon(1e-4));
}

TEST_CASE("episode metrics: stationary crowd burns the standing cost") {
  const EpisodeLog log = constant_speed_log(5, 200, 0.0);
  const Metrics m = episode_metrics(log, EnergyModel{});
  CHECK(m.energy_mean == doctest::Approx(2.23 * 200.0 / 12.0).epsilon(1e-9));
  CHECK(m.success_rate == 0.0);
  CHECK(m.collision_count == 0.0);
  CHECK(m.mean_speed_moving == 0.0);  // below the moving threshold throughout
}

TEST_CASE("episode metrics: success and collision counting") {
  EpisodeLog log = constant_speed_log(4, 10, 1.0);
  for (int i = 0; i < 4; ++i) log.reached[i] = 1;
  log.pair_events_per_step[3] = 2;
  const Metrics m = episode_metrics(log, EnergyModel{});
  CHECK(m.success_rate == 1.0);
  CHECK(m.collision_count == 2.0);
  CHECK(m.mean_speed_moving == doctest::Approx(1.0));
}

TEST_CASE("progress telescopes over a non-reaching trajectory") {
  RewardConfig cfg;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<AgentState> traj;
  Vec2 p{-8.0, -8.0};
  for (int i = 0; i < 40; ++i) {
    traj.push_back(at(p, {}, {10, 0}));
    p += Vec2{u(rng) * 0.1, u(rng) * 0.1};
  }
  double sum = 0.0;
  for (size_t i = 1; i < traj.size(); ++i)
    sum += step_reward(traj[i - 1], traj[i], 0, cfg).progress;
  const double d0 = traj.front().distance_to_goal();
  const double dT = traj.back().distance_to_goal();
  CHECK(sum == doctest::Approx(cfg.c_p * (d0 - dT)).epsilon(1e-9));
}

TEST_CASE("with c_v = 0 the reward ignores the speed magnitude") {
  RewardConfig cfg;
  cfg.c_v = 0.0;
  const AgentState prev = at({0, 0});
  const AgentState cur_slow = at({0.1, 0}, {0.1, 0});
  const AgentState cur_fast = at({0.1, 0}, {1.9, 0.2});
  CHECK(step_reward(prev, cur_slow, 0, cfg).total() ==
        doctest::Approx(step_reward(prev, cur_fast, 0, cfg).total()));
}

TEST_CASE("continuous trip energy is minimized at sqrt(e_s/e_w)") {
  const EnergyModel m;
  const double d = 8.0;
  double best_v = 0.0, best = 1e300;
  for (int i = 200; i <= 2000; ++i) {
    const double v = i * 1e-3;
    const double trip = d / v * (m.e_s + m.e_w * v * v);
    if (trip < best) {
      best = trip;
      best_v = v;
    }
  }
  CHECK(std::abs(best_v - 1.330) <= 1e-3 + 1e-12);
  CHECK(std::abs(best_v - m.optimal_speed()) <= 1e-3);
}

TEST_CASE("energy metric is independent of the reward config") {
  EpisodeLog log = constant_speed_log(3, 50, 1.2);
  // rewards recorded in the log differ, energy must not care
  const Metrics a = episode_metrics(log, EnergyModel{});
  for (auto& agent_steps : log.per_agent)
    for (auto& rec : agent_steps) rec.reward.progress += 123.0;
  const Metrics b = episode_metrics(log, EnergyModel{});
  CHECK(a.energy_mean == b.energy_mean);
  CHECK(a.energy_mean == doctest::Approx((2.23 + 1.26 * 1.44) * 50.0 / 12.0));
}
