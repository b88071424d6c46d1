#include "crowdsim/reward_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crowdsim {
namespace {

// sum_{i=0}^{n} gamma^i
double geometric_sum(double gamma, int n) {
  if (gamma == 1.0) return n + 1.0;
  return (1.0 - std::pow(gamma, n + 1)) / (1.0 - gamma);
}

}  // namespace

TripHorizon trip_horizon(double v, const SimpleModelParams& p) {
  if (v <= 0.0) return {p.t_max, false};
  const double raw = p.d / (v * p.dt);
  if (raw > p.t_max) return {p.t_max, false};
  return {std::min(p.t_max, static_cast<int>(std::ceil(raw))), true};
}

double simplified_return(double v, const SimpleModelParams& p) {
  const RewardConfig& c = p.reward;
  const TripHorizon h = trip_horizon(v, p);
  const double per_step =
      c.c_p * v * p.dt - c.c_v * std::pow(std::abs(v - c.v_0), c.c_e) - c.c_t;
  double r = per_step * geometric_sum(c.gamma, h.steps);
  if (h.reached) r += std::pow(c.gamma, h.steps) * c.c_g;
  return r;
}

double trip_energy(double v, const SimpleModelParams& p, const EnergyModel& model) {
  const TripHorizon h = trip_horizon(v, p);
  return (model.e_s + model.e_w * v * v) * p.dt * (h.steps + 1);
}

double discounted_energy_return(double v, const SimpleModelParams& p, const EnergyModel& model) {
  const TripHorizon h = trip_horizon(v, p);
  return -(model.e_s + model.e_w * v * v) * p.dt * geometric_sum(p.reward.gamma, h.steps);
}

double optimal_velocity(const SimpleModelParams& p, VelocityGrid grid) {
  double best_v = grid.lo;
  double best = simplified_return(grid.lo, p);
  const int n = static_cast<int>(std::round((grid.hi - grid.lo) / grid.step));
  for (int i = 1; i <= n; ++i) {
    const double v = grid.lo + i * grid.step;
    const double r = simplified_return(v, p);
    if (r > best) {  // strict: ties keep the lower velocity
      best = r;
      best_v = v;
    }
  }
  return best_v;
}

double normalized_mse(const SimpleModelParams& p, double c_e, std::pair<double, double> v_range) {
  constexpr int kPoints = 1001;
  SimpleModelParams q = p;
  q.reward.c_e = c_e;
  const EnergyModel energy;

  std::vector<double> ret(kPoints), neg_energy(kPoints);
  for (int i = 0; i < kPoints; ++i) {
    const double v =
        v_range.first + (v_range.second - v_range.first) * static_cast<double>(i) / (kPoints - 1);
    ret[i] = simplified_return(v, q);
    neg_energy[i] = -trip_energy(v, q, energy);
  }
  auto normalize = [](std::vector<double>& xs) {
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *lo_it, span = *hi_it - *lo_it;
    if (span <= 0.0) throw std::domain_error("normalized_mse: flat curve cannot be normalized");
    for (double& x : xs) x = (x - lo) / span;
  };
  normalize(ret);
  normalize(neg_energy);

  double mse = 0.0;
  for (int i = 0; i < kPoints; ++i) {
    const double e = ret[i] - neg_energy[i];
    mse += e * e;
  }
  return mse / kPoints;
}

std::vector<SweepRow> coefficient_sweep(const SimpleModelParams& p, SweepAxis axis,
                                        const std::vector<double>& grid, VelocityGrid v_grid) {
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double value : grid) {
    SimpleModelParams q = p;
    switch (axis) {
      case SweepAxis::c_v: q.reward.c_v = value; break;
      case SweepAxis::c_e: q.reward.c_e = value; break;
      case SweepAxis::gamma: q.reward.gamma = value; break;
    }
    rows.push_back({value, optimal_velocity(q, v_grid)});
  }
  return rows;
}

double optimal_exponent(const SimpleModelParams& p, double lo, double hi, double step) {
  double best_ce = lo;
  double best = normalized_mse(p, lo);
  const int n = static_cast<int>(std::round((hi - lo) / step));
  for (int i = 1; i <= n; ++i) {
    const double ce = lo + i * step;
    const double mse = normalized_mse(p, ce);
    if (mse < best) {
      best = mse;
      best_ce = ce;
    }
  }
  return best_ce;
}

double cv_threshold(const SimpleModelParams& p, double step, double hi) {
  SimpleModelParams q = p;
  for (double cv = step; cv <= hi + 1e-12; cv += step) {
    q.reward.c_v = cv;
    if (optimal_velocity(q) <= 1.5) return cv;
  }
  throw std::domain_error("cv_threshold: no transition found in range");
}

}  // namespace crowdsim
