#include "crowdsim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>

#include "crowdsim/geometry.hpp"

namespace crowdsim {
namespace {

constexpr int kMaxSpawnAttempts = 10000;
constexpr double kSpawnMargin = 0.1;  // clearance beyond touching at spawn

double obstacle_clearance(const Obstacle& o, Vec2 p) {
  if (o.kind == Obstacle::Kind::circle) return (p - o.center).norm() - o.radius;
  return point_segment_distance(p, o.a, o.b) - o.thickness / 2.0;
}

bool position_clear(const WorldState& world, Vec2 p, double radius, int n_placed) {
  for (int i = 0; i < n_placed; ++i) {
    const AgentState& other = world.agents[i];
    if ((p - other.position).norm() < radius + other.radius + kSpawnMargin) return false;
  }
  for (const Obstacle& o : world.obstacles) {
    if (obstacle_clearance(o, p) < radius + kSpawnMargin) return false;
  }
  return true;
}

void add_bounds_walls(WorldState& world) {
  const double h = kSceneSize / 2.0;
  world.obstacles.push_back(Obstacle::make_wall({-h, h}, {h, h}));
  world.obstacles.push_back(Obstacle::make_wall({-h, -h}, {h, -h}));
  world.obstacles.push_back(Obstacle::make_wall({-h, -h}, {-h, h}));
  world.obstacles.push_back(Obstacle::make_wall({h, -h}, {h, h}));
}

AgentState make_agent(Vec2 position, Vec2 goal) {
  AgentState a;
  a.position = position;
  a.goal = goal;
  const Vec2 to_goal = goal - position;
  a.orientation = to_goal.norm_sq() > 0.0 ? std::atan2(to_goal.y, to_goal.x) : 0.0;
  return a;
}

using Rng = std::mt19937_64;

Vec2 uniform_in(Rng& rng, Vec2 lo, Vec2 hi) {
  std::uniform_real_distribution<double> dx(lo.x, hi.x), dy(lo.y, hi.y);
  const double x = dx(rng);
  const double y = dy(rng);
  return {x, y};
}

// Rejection-sample a collision-free spawn inside [lo, hi].
Vec2 sample_clear(const WorldState& world, Rng& rng, Vec2 lo, Vec2 hi, int n_placed) {
  for (int attempt = 0; attempt < kMaxSpawnAttempts; ++attempt) {
    const Vec2 p = uniform_in(rng, lo, hi);
    if (position_clear(world, p, kAgentRadius, n_placed)) return p;
  }
  throw std::runtime_error("build_scenario: no collision-free spawn found (scenario overcrowded)");
}

Vec2 sample_goal_clear(const WorldState& world, Rng& rng, Vec2 lo, Vec2 hi) {
  // Goals may coincide with each other, but keep them out of obstacles/walls.
  for (int attempt = 0; attempt < kMaxSpawnAttempts; ++attempt) {
    const Vec2 p = uniform_in(rng, lo, hi);
    bool clear = true;
    for (const Obstacle& o : world.obstacles) {
      if (obstacle_clearance(o, p) < kAgentRadius + kSpawnMargin) {
        clear = false;
        break;
      }
    }
    if (clear) return p;
  }
  throw std::runtime_error("build_scenario: no obstacle-free goal position found");
}

void build_circle(WorldState& world, const ScenarioConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> noise(-cfg.position_noise, cfg.position_noise);
  for (int i = 0; i < cfg.n_agents; ++i) {
    const double theta = 2.0 * M_PI * i / cfg.n_agents;
    const Vec2 on_circle{cfg.circle_radius * std::cos(theta), cfg.circle_radius * std::sin(theta)};
    Vec2 start;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxSpawnAttempts; ++attempt) {
      const double nx = cfg.position_noise > 0.0 ? noise(rng) : 0.0;
      const double ny = cfg.position_noise > 0.0 ? noise(rng) : 0.0;
      start = on_circle + Vec2{nx, ny};
      if (position_clear(world, start, kAgentRadius, i)) {
        placed = true;
        break;
      }
    }
    if (!placed) throw std::runtime_error("build_scenario: circle spawn overcrowded");
    const double gx = cfg.position_noise > 0.0 ? noise(rng) : 0.0;
    const double gy = cfg.position_noise > 0.0 ? noise(rng) : 0.0;
    world.agents.push_back(make_agent(start, -on_circle + Vec2{gx, gy}));
  }
}

// Fills one end of a corridor with a regular grid of `count` agents. The
// corridor runs along `axis` (unit vector) with half-length hl and half-width
// hw; `sign` = -1 places the group at the negative end. Goals mirror across
// the corridor midpoint.
void build_corridor_group(WorldState& world, int count, Vec2 axis, double hl, double hw,
                          double sign, SpawnMode mode, Rng& rng) {
  const Vec2 lateral{-axis.y, axis.x};
  if (mode == SpawnMode::grid) {
    const double margin = 0.5;
    const double spacing = 0.7;
    const int rows = std::max(1, static_cast<int>(std::floor((2.0 * hw - 2.0 * margin) / spacing)) + 1);
    for (int i = 0; i < count; ++i) {
      const int col = i / rows;
      const int row = i % rows;
      const double along = sign * (hl - margin - col * spacing);
      const double across = -hw + margin + row * spacing;
      const Vec2 start = axis * along + lateral * across;
      if (!position_clear(world, start, kAgentRadius, static_cast<int>(world.agents.size())))
        throw std::runtime_error("build_scenario: corridor grid does not fit");
      world.agents.push_back(make_agent(start, axis * (-along) + lateral * across));
    }
  } else {
    // Random formation in the end quarter of the corridor.
    const Vec2 zone_lo = axis * (sign > 0 ? hl / 2.0 : -hl + 0.5) + lateral * (-hw + 0.5);
    const Vec2 zone_hi = axis * (sign > 0 ? hl - 0.5 : -hl / 2.0) + lateral * (hw - 0.5);
    const Vec2 lo{std::min(zone_lo.x, zone_hi.x), std::min(zone_lo.y, zone_hi.y)};
    const Vec2 hi{std::max(zone_lo.x, zone_hi.x), std::max(zone_lo.y, zone_hi.y)};
    for (int i = 0; i < count; ++i) {
      const Vec2 start = sample_clear(world, rng, lo, hi, static_cast<int>(world.agents.size()));
      const double along = start.dot(axis);
      const double across = start.dot(lateral);
      world.agents.push_back(make_agent(start, axis * (-along) + lateral * across));
    }
  }
}

void add_corridor_walls(WorldState& world, Vec2 axis, double hl, double hw) {
  const Vec2 lateral{-axis.y, axis.x};
  world.obstacles.push_back(Obstacle::make_wall(axis * -hl + lateral * hw, axis * hl + lateral * hw));
  world.obstacles.push_back(Obstacle::make_wall(axis * -hl + lateral * -hw, axis * hl + lateral * -hw));
}

void build_corridor(WorldState& world, const ScenarioConfig& cfg, Rng& rng) {
  const double hl = cfg.corridor_length / 2.0;
  const double hw = cfg.corridor_width / 2.0;
  add_corridor_walls(world, {1.0, 0.0}, hl, hw);
  const int left = cfg.n_agents / 2 + cfg.n_agents % 2;
  build_corridor_group(world, left, {1.0, 0.0}, hl, hw, -1.0, cfg.spawn_mode, rng);
  build_corridor_group(world, cfg.n_agents - left, {1.0, 0.0}, hl, hw, 1.0, cfg.spawn_mode, rng);
}

void add_crossing_walls(WorldState& world, double hl, double hw) {
  // Two perpendicular corridors; walls stop at the shared intersection.
  for (const double s : {1.0, -1.0}) {
    world.obstacles.push_back(Obstacle::make_wall({-hl, s * hw}, {-hw, s * hw}));
    world.obstacles.push_back(Obstacle::make_wall({hw, s * hw}, {hl, s * hw}));
    world.obstacles.push_back(Obstacle::make_wall({s * hw, -hl}, {s * hw, -hw}));
    world.obstacles.push_back(Obstacle::make_wall({s * hw, hw}, {s * hw, hl}));
  }
}

void build_crossing(WorldState& world, const ScenarioConfig& cfg, Rng& rng) {
  const double hl = cfg.corridor_length / 2.0;
  const double hw = cfg.corridor_width / 2.0;
  add_crossing_walls(world, hl, hw);
  const int west = cfg.n_agents / 2 + cfg.n_agents % 2;
  build_corridor_group(world, west, {1.0, 0.0}, hl, hw, -1.0, cfg.spawn_mode, rng);
  build_corridor_group(world, cfg.n_agents - west, {0.0, 1.0}, hl, hw, -1.0, cfg.spawn_mode, rng);
}

void build_random(WorldState& world, const ScenarioConfig& cfg, Rng& rng) {
  const double m = kSceneSize / 2.0 - kAgentRadius - 0.5;
  const Vec2 lo{-m, -m}, hi{m, m};
  for (int k = 0; k < cfg.n_obstacles; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= kMaxSpawnAttempts)
        throw std::runtime_error("build_scenario: no clear obstacle position found");
      const Vec2 p = uniform_in(rng, lo, hi);
      bool clear = true;
      for (const Obstacle& o : world.obstacles) {
        if (obstacle_clearance(o, p) < kAgentRadius + 2.0 * kSpawnMargin) {
          clear = false;
          break;
        }
      }
      if (clear) {
        world.obstacles.push_back(Obstacle::make_circle(p, kAgentRadius));
        break;
      }
    }
  }
  for (int i = 0; i < cfg.n_agents; ++i) {
    const Vec2 start = sample_clear(world, rng, lo, hi, i);
    const Vec2 goal = sample_goal_clear(world, rng, lo, hi);
    world.agents.push_back(make_agent(start, goal));
  }
}

// Normal pointing from the obstacle surface toward p, plus penetration depth.
struct Contact {
  Vec2 normal;
  double depth;
};

std::optional<Contact> agent_obstacle_contact(const AgentState& agent, const Obstacle& o) {
  Vec2 ref;
  double surface;
  if (o.kind == Obstacle::Kind::circle) {
    ref = o.center;
    surface = o.radius;
  } else {
    ref = closest_point_on_segment(agent.position, o.a, o.b);
    surface = o.thickness / 2.0;
  }
  const Vec2 d = agent.position - ref;
  const double dist = d.norm();
  const double depth = agent.radius + surface - dist;
  if (depth <= 0.0) return std::nullopt;
  const Vec2 n = dist > 1e-12 ? d / dist : Vec2{1.0, 0.0};
  return Contact{n, depth};
}

}  // namespace

bool WorldState::all_reached() const {
  return std::all_of(agents.begin(), agents.end(),
                     [](const AgentState& a) { return a.reached_goal; });
}

WorldState build_scenario(const ScenarioConfig& cfg) {
  if (cfg.n_agents < 1) throw std::invalid_argument("build_scenario: n_agents must be >= 1");
  WorldState world;
  world.t_max = cfg.t_max;
  world.goal_radius = cfg.goal_radius;
  add_bounds_walls(world);
  Rng rng(cfg.seed);
  switch (cfg.kind) {
    case ScenarioKind::circle: build_circle(world, cfg, rng); break;
    case ScenarioKind::corridor: build_corridor(world, cfg, rng); break;
    case ScenarioKind::crossing: build_crossing(world, cfg, rng); break;
    case ScenarioKind::random: build_random(world, cfg, rng); break;
  }
  return world;
}

AgentState integrate_dynamics(const AgentState& agent, Vec2 action,
                              const DynamicsConfig& cfg, double dt) {
  AgentState next = agent;
  switch (cfg.model) {
    case DynamicsModel::cartesian_velocity:
      next.velocity = (action * cfg.v_max).clamped_norm(cfg.v_max);
      break;
    case DynamicsModel::cartesian_acceleration: {
      const Vec2 accel = action * cfg.a_max - agent.velocity * cfg.lambda;
      next.velocity = (agent.velocity + accel * dt).clamped_norm(cfg.v_max);
      break;
    }
    case DynamicsModel::polar_velocity: {
      next.orientation = wrap_angle(agent.orientation + action.y * cfg.omega_max * dt);
      const double speed = std::max(0.0, action.x) * cfg.v_max;
      next.velocity = Vec2{std::cos(next.orientation), std::sin(next.orientation)} * speed;
      break;
    }
    case DynamicsModel::polar_acceleration: {
      next.orientation = wrap_angle(agent.orientation + action.y * cfg.omega_max * dt);
      const Vec2 heading{std::cos(next.orientation), std::sin(next.orientation)};
      const double speed = agent.velocity.dot(
          Vec2{std::cos(agent.orientation), std::sin(agent.orientation)});
      const double next_speed =
          std::max(0.0, speed + (action.x * cfg.a_max - cfg.lambda * speed) * dt);
      next.velocity = heading * next_speed;
      break;
    }
  }
  next.position = agent.position + next.velocity * dt;
  if (cfg.model == DynamicsModel::cartesian_velocity ||
      cfg.model == DynamicsModel::cartesian_acceleration) {
    if (next.velocity.norm_sq() > 0.0)
      next.orientation = std::atan2(next.velocity.y, next.velocity.x);
  }
  return next;
}

std::vector<CollisionEvent> resolve_collisions(WorldState& world) {
  std::vector<CollisionEvent> events;
  auto record = [&events](CollisionEvent e) {
    if (std::find(events.begin(), events.end(), e) == events.end()) events.push_back(e);
  };

  const int n = static_cast<int>(world.agents.size());
  // Gauss-Seidel passes until no pair overlaps (chains of contacts need more
  // than one sweep).
  for (int pass = 0; pass < 16; ++pass) {
    bool any = false;
    for (int i = 0; i < n; ++i) {
      AgentState& a = world.agents[i];
      for (int j = i + 1; j < n; ++j) {
        AgentState& b = world.agents[j];
        const Vec2 d = b.position - a.position;
        const double dist = d.norm();
        const double depth = a.radius + b.radius - dist;
        if (depth <= 0.0) continue;
        any = true;
        record({i, j, false});
        const Vec2 normal = dist > 1e-12 ? d / dist : Vec2{1.0, 0.0};
        a.position -= normal * (depth / 2.0);
        b.position += normal * (depth / 2.0);
        const double va_n = a.velocity.dot(normal);
        const double vb_n = b.velocity.dot(normal);
        if (vb_n - va_n < 0.0) {  // approaching: inelastic normal response
          const double mean_n = (va_n + vb_n) / 2.0;
          a.velocity += normal * (mean_n - va_n);
          b.velocity += normal * (mean_n - vb_n);
        }
      }
      for (int m = 0; m < static_cast<int>(world.obstacles.size()); ++m) {
        const auto contact = agent_obstacle_contact(a, world.obstacles[m]);
        if (!contact) continue;
        any = true;
        record({i, m, true});
        a.position += contact->normal * contact->depth;
        const double v_n = a.velocity.dot(contact->normal);
        if (v_n < 0.0) a.velocity -= contact->normal * v_n;
      }
    }
    if (!any) break;
  }
  return events;
}

StepEvents step(WorldState& world, std::span<const Vec2> joint_action,
                const DynamicsConfig& dyn) {
  const int n = static_cast<int>(world.agents.size());
  if (static_cast<int>(joint_action.size()) != n)
    throw std::invalid_argument("step: joint_action size does not match agent count");

  StepEvents out;
  out.collisions.assign(n, 0);
  out.newly_reached.assign(n, 0);
  const bool polar = dyn.model == DynamicsModel::polar_velocity ||
                     dyn.model == DynamicsModel::polar_acceleration;
  const double sub_dt = dyn.decision_dt / dyn.physics_substeps;

  std::set<std::pair<int, int>> seen;  // pair key; obstacle ids offset by n
  for (int s = 0; s < dyn.physics_substeps; ++s) {
    for (int i = 0; i < n; ++i) {
      Vec2 act = world.agents[i].reached_goal
                     ? Vec2{}
                     : Vec2{clamp_unit(joint_action[i].x), clamp_unit(joint_action[i].y)};
      world.agents[i] = integrate_dynamics(world.agents[i], act, dyn, sub_dt);
    }
    for (const CollisionEvent& e : resolve_collisions(world)) {
      const int other = e.other_is_obstacle ? n + e.other : e.other;
      if (seen.insert({e.agent, other}).second) {
        out.pair_events.push_back(e);
        ++out.collisions[e.agent];
        if (!e.other_is_obstacle) ++out.collisions[e.other];
      }
    }
    // Collision responses may knock velocities off-model or transfer
    // momentum beyond the locomotion limit; restore the per-model
    // velocity/orientation coupling and the speed cap.
    for (AgentState& a : world.agents) {
      if (polar) {
        const Vec2 heading{std::cos(a.orientation), std::sin(a.orientation)};
        a.velocity = heading * std::max(0.0, a.velocity.dot(heading));
      } else if (a.velocity.norm_sq() > 0.0) {
        a.orientation = std::atan2(a.velocity.y, a.velocity.x);
      }
      a.velocity = a.velocity.clamped_norm(dyn.v_max);
    }
  }

  ++world.step_index;
  for (int i = 0; i < n; ++i) {
    AgentState& a = world.agents[i];
    if (!a.reached_goal && a.distance_to_goal() < world.goal_radius) {
      a.reached_goal = true;
      a.active = false;
      out.newly_reached[i] = 1;
    }
  }
  return out;
}

}  // namespace crowdsim
