#include "crowdsim/env.hpp"

namespace crowdsim {

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)) {
  reset(cfg_.scenario.seed);
}

void Environment::reset(std::uint64_t seed) {
  ScenarioConfig sc = cfg_.scenario;
  sc.seed = seed;
  world_ = build_scenario(sc);
  prev_rays_.assign(world_.agents.size(), {});
  log_.start(static_cast<int>(world_.agents.size()), cfg_.dynamics.decision_dt);
}

Observation Environment::observe(int agent_id) const {
  return assemble(world_, agent_id, cfg_.perception, prev_rays_[agent_id]);
}

Environment::StepResult Environment::step(std::span<const Vec2> actions) {
  const int n = n_agents();
  StepResult out;
  out.was_reached.resize(n);
  for (int i = 0; i < n; ++i) out.was_reached[i] = world_.agents[i].reached_goal ? 1 : 0;

  // Cache the pre-step rays for frame stacking before the world moves.
  if (cfg_.perception.frame_stack == 2 &&
      (cfg_.perception.mode == PerceptionMode::raycast ||
       cfg_.perception.mode == PerceptionMode::hybrid)) {
    const RayTargets targets = cfg_.perception.mode == PerceptionMode::hybrid
                                   ? RayTargets::walls_only
                                   : RayTargets::all;
    for (int i = 0; i < n; ++i) prev_rays_[i] = raycast(world_, i, cfg_.perception, targets);
  }

  const std::vector<AgentState> prev = world_.agents;
  const StepEvents events = crowdsim::step(world_, actions, cfg_.dynamics);

  out.rewards.resize(n);
  for (int i = 0; i < n; ++i)
    out.rewards[i] = step_reward(prev[i], world_.agents[i], events.collisions[i], cfg_.reward);
  out.newly_reached = events.newly_reached;
  out.terminal = world_.terminal();

  log_.record_step(actions, world_, out.rewards, events.collisions,
                   static_cast<int>(events.pair_events.size()), out.was_reached);
  return out;
}

}  // namespace crowdsim
