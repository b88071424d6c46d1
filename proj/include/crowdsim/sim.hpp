#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crowdsim/vec2.hpp"

namespace crowdsim {

inline constexpr double kAgentRadius = 0.2;    // m, all standard agents
inline constexpr double kSceneSize = 20.0;     // m, side of the square arena
inline constexpr double kWallThickness = 0.1;  // m, built-in scenario walls

enum class DynamicsModel {
  cartesian_velocity,
  cartesian_acceleration,
  polar_velocity,
  polar_acceleration,
};

struct DynamicsConfig {
  DynamicsModel model = DynamicsModel::cartesian_velocity;
  double v_max = 2.0;       // m/s
  double a_max = 2.0;       // m/s^2
  double omega_max = 3.0;   // rad/s, polar turn rate
  double lambda = 1.0;      // 1/s, linear damping; must equal a_max / v_max
  double decision_dt = 1.0 / 12.0;  // s
  int physics_substeps = 10;
};

struct AgentState {
  Vec2 position;            // m
  Vec2 velocity;            // m/s
  double orientation = 0.0; // rad, in (-pi, pi]
  Vec2 goal;                // m
  double radius = kAgentRadius;
  bool reached_goal = false;
  bool active = true;       // false once the goal is reached (passive body)

  double distance_to_goal() const { return (position - goal).norm(); }
};

struct Obstacle {
  enum class Kind { circle, wall };
  Kind kind = Kind::circle;
  // circle
  Vec2 center;
  double radius = 0.2;
  // wall segment
  Vec2 a, b;
  double thickness = 0.0;

  static Obstacle make_circle(Vec2 center, double radius) {
    Obstacle o;
    o.kind = Kind::circle;
    o.center = center;
    o.radius = radius;
    return o;
  }
  static Obstacle make_wall(Vec2 a, Vec2 b, double thickness = kWallThickness) {
    Obstacle o;
    o.kind = Kind::wall;
    o.a = a;
    o.b = b;
    o.thickness = thickness;
    return o;
  }
};

struct Rect {
  Vec2 lo{-kSceneSize / 2, -kSceneSize / 2};
  Vec2 hi{kSceneSize / 2, kSceneSize / 2};
};

struct WorldState {
  std::vector<AgentState> agents;
  std::vector<Obstacle> obstacles;
  int step_index = 0;
  int t_max = 200;           // decision steps
  Rect bounds;
  double goal_radius = 0.5;  // m, reach threshold

  bool all_reached() const;
  bool terminal() const { return step_index >= t_max || all_reached(); }
};

enum class ScenarioKind { circle, corridor, crossing, random };
enum class SpawnMode { grid, random };

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::circle;
  int n_agents = 6;
  double circle_radius = 4.0;    // m
  double corridor_width = 4.0;   // m
  double corridor_length = 20.0; // m
  SpawnMode spawn_mode = SpawnMode::grid;
  double position_noise = 0.5;   // m, uniform per-axis (circle spawn/goal jitter)
  int n_obstacles = 0;
  std::uint64_t seed = 0;
  int t_max = 200;
  double goal_radius = 0.5;
};

// Places agents, goals, walls and obstacles for one of the four built-in
// scenarios. Deterministic in cfg.seed; throws std::runtime_error when a
// collision-free spawn cannot be found in 10,000 attempts for some agent.
WorldState build_scenario(const ScenarioConfig& cfg);

// One kinematic update of a single agent. `action` components must already
// be in [-1, 1].
AgentState integrate_dynamics(const AgentState& agent, Vec2 action,
                              const DynamicsConfig& cfg, double dt);

struct CollisionEvent {
  int agent = -1;
  int other = -1;           // agent index, or obstacle index
  bool other_is_obstacle = false;

  bool operator==(const CollisionEvent&) const = default;
};

// Separates every overlapping agent-agent / agent-obstacle pair (mobile
// bodies split the penetration, obstacles do not move) and cancels the
// approaching normal component of relative velocity. Returns one event per
// overlapping pair found during this call.
std::vector<CollisionEvent> resolve_collisions(WorldState& world);

struct StepEvents {
  std::vector<int> collisions;         // per agent, unique pairs this decision step
  std::vector<std::uint8_t> newly_reached;
  std::vector<CollisionEvent> pair_events;  // deduplicated across substeps
};

// Advances the world by one decision step (physics_substeps sub-iterations
// with the action held). joint_action must have one entry per agent; entries
// for reached agents are ignored.
StepEvents step(WorldState& world, std::span<const Vec2> joint_action,
                const DynamicsConfig& dyn);

}  // namespace crowdsim
