#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "crowdsim/sim.hpp"

namespace crowdsim {

enum class PerceptionMode { raycast, agent_perception, hybrid };
enum class ReferenceFrame { absolute, relative, egocentric };

struct PerceptionConfig {
  PerceptionMode mode = PerceptionMode::agent_perception;
  ReferenceFrame frame = ReferenceFrame::egocentric;
  int n_rays = 20;
  double ray_range = 10.0;  // m
  int k_neighbors = 10;
  int frame_stack = 1;      // 2 appends the previous decision step's rays
};

// One neighbor entry: [pos.x, pos.y, vel.x, vel.y, distance], all in the
// observer's reference frame (distance is frame-independent).
using NeighborFeature = std::array<double, 5>;
inline constexpr int kProprioDim = 8;

struct Observation {
  std::vector<double> proprio;               // kProprioDim values
  std::optional<std::vector<double>> rays;   // n_rays * frame_stack, in [0, 1]
  std::vector<NeighborFeature> neighbors;    // ascending distance, <= k_neighbors
};

// Maps a world-frame point or velocity into the observer's frame. Egocentric
// rotates the observer's heading onto +x.
Vec2 frame_transform(ReferenceFrame frame, const AgentState& self, Vec2 q, bool is_velocity);

// [p, goal-term, cos(phi), sin(phi), velocity-term]; the goal and velocity
// terms depend on the frame.
std::vector<double> proprioception(const AgentState& self, ReferenceFrame frame);

enum class RayTargets { all, walls_only };

// Normalized first-hit distances for n_rays rays from the agent center.
// 1.0 means nothing within ray_range. Ray k points at orientation + 2*pi*k/n
// (world-fixed angles in the Absolute frame). walls_only skips all circles.
std::vector<double> raycast(const WorldState& world, int agent_id,
                            const PerceptionConfig& cfg, RayTargets targets);

// Features of the k nearest other bodies (agents and circle obstacles).
// Reached agents and obstacles report zero velocity.
std::vector<NeighborFeature> agent_perception(const WorldState& world, int agent_id,
                                              const PerceptionConfig& cfg);

// Builds the full observation for one agent. prev_rays supplies the previous
// decision step's ray block when frame_stack = 2 (zeros when empty).
Observation assemble(const WorldState& world, int agent_id, const PerceptionConfig& cfg,
                     std::span<const double> prev_rays = {});

}  // namespace crowdsim
