#pragma once

#include <cstdint>

#include "crowdsim/perception.hpp"
#include "crowdsim/reward.hpp"
#include "crowdsim/sim.hpp"

namespace crowdsim {

// The design-choice bundle: scenario, perception mode/frame, dynamics model
// and reward coefficients.
struct EnvConfig {
  ScenarioConfig scenario;
  PerceptionConfig perception;
  DynamicsConfig dynamics;
  RewardConfig reward;
};

// One simulated world plus per-agent observation building (including the
// previous-step ray cache for frame stacking) and reward computation.
class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  // Rebuilds the scenario with the given seed and clears the episode log.
  void reset(std::uint64_t seed);

  const WorldState& world() const { return world_; }
  const EnvConfig& config() const { return cfg_; }
  int n_agents() const { return static_cast<int>(world_.agents.size()); }

  // Observation of agent i for the current world state.
  Observation observe(int agent_id) const;

  struct StepResult {
    std::vector<StepRewardBreakdown> rewards;  // zero for already-reached agents
    std::vector<std::uint8_t> newly_reached;
    std::vector<std::uint8_t> was_reached;     // reached before this step
    bool terminal = false;
  };

  // Advances one decision step; actions are clamped to [-1, 1]^2 internally.
  StepResult step(std::span<const Vec2> actions);

  const EpisodeLog& log() const { return log_; }

 private:
  EnvConfig cfg_;
  WorldState world_;
  std::vector<std::vector<double>> prev_rays_;  // per agent, last decision step
  EpisodeLog log_;
};

}  // namespace crowdsim
