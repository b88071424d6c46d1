#pragma once

#include <utility>
#include <vector>

#include "crowdsim/reward.hpp"

namespace crowdsim {

// Single-agent straight-line model: travel distance d at constant speed v,
// horizon t_max decision steps of dt seconds.
struct SimpleModelParams {
  RewardConfig reward;
  double d = 8.0;        // m
  int t_max = 200;       // steps
  double dt = 1.0 / 12;  // s
};

// Number of reward steps: min(t_max, ceil(d / (v*dt))), plus whether the
// goal is reached within the horizon.
struct TripHorizon {
  int steps;
  bool reached;
};
TripHorizon trip_horizon(double v, const SimpleModelParams& p);

// Total discounted return of moving at constant speed v:
//   gamma^T * c_g (if reached) + sum_{i=0}^{T} gamma^i (c_p v dt - c_v|v-v_0|^{c_e} - c_t)
double simplified_return(double v, const SimpleModelParams& p);

// Raw (undiscounted) trip energy under the same horizon rule: the agent
// burns e_s + e_w v^2 for T+1 steps, the full horizon when it never arrives.
double trip_energy(double v, const SimpleModelParams& p, const EnergyModel& model);

// -sum_{i=0}^{T} gamma^i (e_s + e_w v^2) dt, same horizon rule.
double discounted_energy_return(double v, const SimpleModelParams& p, const EnergyModel& model);

struct VelocityGrid {
  double lo = 0.0;
  double hi = 2.0;
  double step = 1e-3;
};

// Argmax of simplified_return over the grid; ties break toward lower v.
double optimal_velocity(const SimpleModelParams& p, VelocityGrid grid = {});

// Mean squared error between the return curve (with exponent c_e) and the
// negative trip-energy curve, both min-max normalized over v_range, sampled
// on a uniform 1001-point grid across v_range. Throws on a flat curve.
double normalized_mse(const SimpleModelParams& p, double c_e,
                      std::pair<double, double> v_range = {1.0, 2.0});

enum class SweepAxis { c_v, c_e, gamma };

struct SweepRow {
  double value;
  double optimal_v;
};

// optimal_velocity as a function of one reward parameter.
std::vector<SweepRow> coefficient_sweep(const SimpleModelParams& p, SweepAxis axis,
                                        const std::vector<double>& grid,
                                        VelocityGrid v_grid = {});

// Argmin of normalized_mse over c_e in [lo, hi] with the given step.
double optimal_exponent(const SimpleModelParams& p, double lo = 1.0, double hi = 3.0,
                        double step = 0.01);

// First c_v in {step, 2*step, ...} <= hi whose optimal velocity is <= 1.5 m/s
// (the c_e = 1 transition point from max-speed to preferred-speed behavior).
double cv_threshold(const SimpleModelParams& p, double step = 0.01, double hi = 0.2);

}  // namespace crowdsim
