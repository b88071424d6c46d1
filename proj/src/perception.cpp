#include "crowdsim/perception.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crowdsim/geometry.hpp"

namespace crowdsim {

Vec2 frame_transform(ReferenceFrame frame, const AgentState& self, Vec2 q, bool is_velocity) {
  switch (frame) {
    case ReferenceFrame::absolute:
      return q;
    case ReferenceFrame::relative:
      return is_velocity ? q : q - self.position;
    case ReferenceFrame::egocentric: {
      const Vec2 local = is_velocity ? q : q - self.position;
      return local.rotated(-self.orientation);
    }
  }
  return q;
}

std::vector<double> proprioception(const AgentState& self, ReferenceFrame frame) {
  const Vec2 goal_term = frame_transform(frame, self, self.goal, false);
  const Vec2 vel_term = frame_transform(frame, self, self.velocity, true);
  return {self.position.x, self.position.y,
          goal_term.x,     goal_term.y,
          std::cos(self.orientation), std::sin(self.orientation),
          vel_term.x,      vel_term.y};
}

std::vector<double> raycast(const WorldState& world, int agent_id,
                            const PerceptionConfig& cfg, RayTargets targets) {
  if (cfg.n_rays < 1) throw std::invalid_argument("raycast: n_rays must be >= 1");
  const AgentState& self = world.agents[agent_id];
  const double base = cfg.frame == ReferenceFrame::absolute ? 0.0 : self.orientation;
  const bool circles = targets == RayTargets::all;

  std::vector<double> out(cfg.n_rays, 1.0);
  for (int k = 0; k < cfg.n_rays; ++k) {
    const double angle = base + 2.0 * M_PI * k / cfg.n_rays;
    const Vec2 dir{std::cos(angle), std::sin(angle)};
    double nearest = cfg.ray_range;
    auto consider = [&nearest](std::optional<double> t) {
      if (t && *t < nearest) nearest = *t;
    };
    if (circles) {
      for (int j = 0; j < static_cast<int>(world.agents.size()); ++j) {
        if (j == agent_id) continue;
        consider(ray_circle(self.position, dir, world.agents[j].position, world.agents[j].radius));
      }
    }
    for (const Obstacle& o : world.obstacles) {
      if (o.kind == Obstacle::Kind::circle) {
        if (circles) consider(ray_circle(self.position, dir, o.center, o.radius));
      } else {
        consider(ray_capsule(self.position, dir, o.a, o.b, o.thickness / 2.0));
      }
    }
    out[k] = nearest / cfg.ray_range;
  }
  return out;
}

std::vector<NeighborFeature> agent_perception(const WorldState& world, int agent_id,
                                              const PerceptionConfig& cfg) {
  const AgentState& self = world.agents[agent_id];
  struct Body {
    Vec2 position, velocity;
    double distance;
  };
  std::vector<Body> bodies;
  for (int j = 0; j < static_cast<int>(world.agents.size()); ++j) {
    if (j == agent_id) continue;
    const AgentState& other = world.agents[j];
    const Vec2 vel = other.reached_goal ? Vec2{} : other.velocity;
    bodies.push_back({other.position, vel, (other.position - self.position).norm()});
  }
  for (const Obstacle& o : world.obstacles) {
    if (o.kind != Obstacle::Kind::circle) continue;  // walls are raycast-only
    bodies.push_back({o.center, {}, (o.center - self.position).norm()});
  }
  std::stable_sort(bodies.begin(), bodies.end(),
                   [](const Body& a, const Body& b) { return a.distance < b.distance; });
  if (static_cast<int>(bodies.size()) > cfg.k_neighbors) bodies.resize(cfg.k_neighbors);

  std::vector<NeighborFeature> out;
  out.reserve(bodies.size());
  for (const Body& b : bodies) {
    const Vec2 p = frame_transform(cfg.frame, self, b.position, false);
    const Vec2 v = frame_transform(cfg.frame, self, b.velocity, true);
    out.push_back({p.x, p.y, v.x, v.y, b.distance});
  }
  return out;
}

Observation assemble(const WorldState& world, int agent_id, const PerceptionConfig& cfg,
                     std::span<const double> prev_rays) {
  Observation obs;
  obs.proprio = proprioception(world.agents[agent_id], cfg.frame);
  if (cfg.mode == PerceptionMode::raycast || cfg.mode == PerceptionMode::hybrid) {
    const RayTargets targets =
        cfg.mode == PerceptionMode::hybrid ? RayTargets::walls_only : RayTargets::all;
    std::vector<double> current = raycast(world, agent_id, cfg, targets);
    if (cfg.frame_stack == 2) {
      std::vector<double> stacked(cfg.n_rays, 0.0);
      if (!prev_rays.empty()) {
        if (static_cast<int>(prev_rays.size()) != cfg.n_rays)
          throw std::invalid_argument("assemble: prev_rays size mismatch");
        stacked.assign(prev_rays.begin(), prev_rays.end());
      }
      stacked.insert(stacked.end(), current.begin(), current.end());
      obs.rays = std::move(stacked);
    } else {
      obs.rays = std::move(current);
    }
  }
  if (cfg.mode == PerceptionMode::agent_perception || cfg.mode == PerceptionMode::hybrid) {
    obs.neighbors = agent_perception(world, agent_id, cfg);
  }
  return obs;
}

}  // namespace crowdsim
