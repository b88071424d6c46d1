#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "crowdsim/policy.hpp"

using namespace crowdsim;

namespace {

PerceptionConfig perception_for(PerceptionMode mode) {
  PerceptionConfig cfg;
  cfg.mode = mode;
  cfg.n_rays = 8;
  return cfg;
}

Observation random_obs(const ArchitectureSpec& arch, std::mt19937_64& rng, int n_neighbors) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Observation obs;
  for (int i = 0; i < kProprioDim; ++i) obs.proprio.push_back(u(rng) / 2.0);
  if (arch.ray_dim > 0) {
    obs.rays.emplace();
    for (int i = 0; i < arch.ray_dim; ++i) obs.rays->push_back(unit(rng));
  }
  if (arch.has_neighbors) {
    for (int n = 0; n < n_neighbors; ++n) {
      NeighborFeature f;
      for (int k = 0; k < 5; ++k) f[k] = u(rng) / 2.0;
      f[4] = std::abs(f[4]);
      obs.neighbors.push_back(f);
    }
  }
  return obs;
}

std::vector<std::vector<double>> random_features(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> feats(count);
  for (auto& f : feats)
    for (int k = 0; k < 5; ++k) f.push_back(u(rng));
  return feats;
}

double max_rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace

TEST_CASE("embed_neighbors: empty set maps to phi of the zero vector") {
  const ArchitectureSpec arch = make_arch(perception_for(PerceptionMode::agent_perception));
  const PolicyParams p = init_policy(arch, 1);
  const std::vector<double> empty_embed = embed_neighbors(p, {});
  // phi(0) by hand: tanh(b) through phi's layers with zero input
  REQUIRE(empty_embed.size() == 64);
  const std::vector<double> zero_sum_embed = embed_neighbors(p, {});
  CHECK(empty_embed == zero_sum_embed);
}

TEST_CASE("embed_neighbors is permutation invariant within 1e-6 relative") {
  const ArchitectureSpec arch = make_arch(perception_for(PerceptionMode::agent_perception));
  const PolicyParams p = init_policy(arch, 2);
  std::mt19937_64 rng(3);
  auto feats = random_features(rng, 10);
  const std::vector<double> base = embed_neighbors(p, feats);
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(feats.begin(), feats.end(), rng);
    const std::vector<double> shuffled = embed_neighbors(p, feats);
    for (size_t k = 0; k < base.size(); ++k)
      CHECK(max_rel_error(base[k], shuffled[k]) <= 1e-6);
  }
}

TEST_CASE("embed_neighbors has multiset semantics") {
  const ArchitectureSpec arch = make_arch(perception_for(PerceptionMode::agent_perception));
  const PolicyParams p = init_policy(arch, 4);
  std::mt19937_64 rng(5);
  const auto one = random_features(rng, 1);
  const std::vector<std::vector<double>> two{one[0], one[0]};
  const auto e1 = embed_neighbors(p, one);
  const auto e2 = embed_neighbors(p, two);
  // a duplicated element changes the sum, hence the embedding
  double diff = 0.0;
  for (size_t k = 0; k < e1.size(); ++k) diff = std::max(diff, std::abs(e1[k] - e2[k]));
  CHECK(diff > 1e-6);
}

TEST_CASE("forward is deterministic and validates the observation layout") {
  std::mt19937_64 rng(7);
  const ArchitectureSpec ap_arch = make_arch(perception_for(PerceptionMode::agent_perception));
  const PolicyParams ap = init_policy(ap_arch, 8);
  const Observation obs = random_obs(ap_arch, rng, 3);
  const PolicyOutput a = forward(ap, obs);
  const PolicyOutput b = forward(ap, obs);
  CHECK(a.action_mean.x == b.action_mean.x);
  CHECK(a.action_mean.y == b.action_mean.y);
  CHECK(a.value == b.value);

  const ArchitectureSpec rc_arch = make_arch(perception_for(PerceptionMode::raycast));
  const PolicyParams rc = init_policy(rc_arch, 9);
  CHECK_THROWS_AS(forward(rc, obs), std::invalid_argument);  // neighbors, no rays

  Observation no_rays = random_obs(rc_arch, rng, 0);
  no_rays.rays.reset();
  CHECK_THROWS_AS(forward(rc, no_rays), std::invalid_argument);
}

TEST_CASE("freshly initialized policy keeps action means small") {
  std::mt19937_64 rng(11);
  for (const PerceptionMode mode :
       {PerceptionMode::raycast, PerceptionMode::agent_perception, PerceptionMode::hybrid}) {
    const ArchitectureSpec arch = make_arch(perception_for(mode));
    const PolicyParams p = init_policy(arch, 13);
    for (int i = 0; i < 20; ++i) {
      const Observation obs = random_obs(arch, rng, i % 5);
      const PolicyOutput out = forward(p, obs);
      CHECK(std::abs(out.action_mean.x) < 1.0);
      CHECK(std::abs(out.action_mean.y) < 1.0);
      CHECK(out.action_std.x == doctest::Approx(1.0));  // log_std starts at 0
    }
  }
}

TEST_CASE("log-prob and entropy closed forms") {
  PolicyOutput out;
  out.action_mean = {0.3, -0.2};
  out.action_std = {1.0, 1.0};
  const auto at_mean = log_prob_and_entropy(out, out.action_mean);
  CHECK(at_mean.log_prob == doctest::Approx(-std::log(2.0 * M_PI)));  // -sum log(sigma sqrt(2pi))
  CHECK(at_mean.entropy == doctest::Approx(std::log(2.0 * M_PI * std::exp(1.0))).epsilon(1e-9));
  CHECK(at_mean.entropy == doctest::Approx(2.8379).epsilon(1e-4));

  double prev = at_mean.log_prob;
  for (double d = 0.2; d < 2.0; d += 0.2) {
    const auto lp = log_prob_and_entropy(out, {out.action_mean.x + d, out.action_mean.y});
    CHECK(lp.log_prob < prev);
    prev = lp.log_prob;
  }
}

TEST_CASE("gradients match central finite differences on every variant") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const PerceptionMode mode :
       {PerceptionMode::raycast, PerceptionMode::agent_perception, PerceptionMode::hybrid}) {
    CAPTURE(static_cast<int>(mode));
    const ArchitectureSpec arch =
        make_arch(perception_for(mode), {{32, 32}}, {{32}}, {{32}});
    PolicyParams p = init_policy(arch, 19);

    // batch of 4 samples; old_log_prob set to the current log-prob so the
    // ratio sits at 1, inside the smooth clip region
    std::vector<Observation> observations;
    for (int i = 0; i < 4; ++i) observations.push_back(random_obs(arch, rng, i % 4));
    std::vector<PpoSample> batch;
    for (int i = 0; i < 4; ++i) {
      PpoSample s;
      s.obs = &observations[i];
      const PolicyOutput out = forward(p, observations[i]);
      s.action = {out.action_mean.x + 0.3 * u(rng), out.action_mean.y + 0.3 * u(rng)};
      s.old_log_prob = log_prob_and_entropy(out, s.action).log_prob;
      s.advantage = u(rng);
      s.value_target = u(rng);
      batch.push_back(s);
    }
    const PpoLossSpec spec{0.2, 0.5, 0.01};

    PolicyParams grads = zeros_like(p);
    ppo_backward(p, batch, spec, grads);
    std::vector<double*> refs = param_refs(p);
    std::vector<double*> grad_refs = param_refs(grads);

    std::uniform_int_distribution<size_t> pick(0, refs.size() - 1);
    const double eps = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
      const size_t i = pick(rng);
      const double saved = *refs[i];
      *refs[i] = saved + eps;
      const double up = ppo_loss(p, batch, spec);
      *refs[i] = saved - eps;
      const double down = ppo_loss(p, batch, spec);
      *refs[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      worst = std::max(worst, max_rel_error(fd, *grad_refs[i]));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradients stay exact when a neighbor appears twice") {
  // The sum over psi outputs accumulates one backward contribution per
  // occurrence, so a duplicated neighbor contributes exactly twice; the
  // finite-difference oracle verifies that multiplicity handling.
  const ArchitectureSpec arch =
      make_arch(perception_for(PerceptionMode::agent_perception), {{32, 32}}, {{32}}, {{32}});
  PolicyParams p = init_policy(arch, 23);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  Observation obs = random_obs(arch, rng, 1);
  obs.neighbors.push_back(obs.neighbors[0]);
  obs.neighbors.push_back(obs.neighbors[0]);

  PpoSample s;
  s.obs = &obs;
  const PolicyOutput out = forward(p, obs);
  s.action = {out.action_mean.x + 0.2, out.action_mean.y - 0.1};
  s.old_log_prob = log_prob_and_entropy(out, s.action).log_prob;
  s.advantage = 0.7;
  s.value_target = out.value + 0.5;
  const PpoLossSpec spec{0.2, 0.5, 0.0};

  PolicyParams grads = zeros_like(p);
  ppo_backward(p, {&s, 1}, spec, grads);
  std::vector<double*> refs = param_refs(p);
  std::vector<double*> grad_refs = param_refs(grads);
  std::uniform_int_distribution<size_t> pick(0, refs.size() - 1);
  const double eps = 1e-5;
  for (int trial = 0; trial < 32; ++trial) {
    const size_t i = pick(rng);
    const double saved = *refs[i];
    *refs[i] = saved + eps;
    const double up = ppo_loss(p, {&s, 1}, spec);
    *refs[i] = saved - eps;
    const double down = ppo_loss(p, {&s, 1}, spec);
    *refs[i] = saved;
    CHECK(max_rel_error((up - down) / (2.0 * eps), *grad_refs[i]) < 1e-4);
  }
}

TEST_CASE("zero advantages and zero value residuals give zero gradients") {
  const ArchitectureSpec arch = make_arch(perception_for(PerceptionMode::agent_perception));
  PolicyParams p = init_policy(arch, 31);
  std::mt19937_64 rng(37);
  Observation obs = random_obs(arch, rng, 2);
  PpoSample s;
  s.obs = &obs;
  const PolicyOutput out = forward(p, obs);
  s.action = {out.action_mean.x + 0.1, out.action_mean.y};
  s.old_log_prob = log_prob_and_entropy(out, s.action).log_prob;
  s.advantage = 0.0;
  s.value_target = out.value;  // zero residual
  PolicyParams grads = zeros_like(p);
  ppo_backward(p, {&s, 1}, {0.2, 0.5, 0.0}, grads);
  for (double* g : param_refs(grads)) CHECK(*g == 0.0);
}

TEST_CASE("forward accepts any neighbor count without reallocation of params") {
  const ArchitectureSpec arch = make_arch(perception_for(PerceptionMode::agent_perception));
  const PolicyParams p = init_policy(arch, 41);
  std::mt19937_64 rng(43);
  for (int n = 0; n <= 10; ++n) {
    const Observation obs = random_obs(arch, rng, n);
    const PolicyOutput out = forward(p, obs);
    CHECK(std::isfinite(out.action_mean.x));
    CHECK(std::isfinite(out.value));
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  const ArchitectureSpec arch = make_arch(perception_for(PerceptionMode::hybrid));
  PolicyParams p = init_policy(arch, 47);
  p.log_std = {-0.7, 0.3};
  const std::string path = "/tmp/crowdsim_test_policy.json";
  save_policy(p, path);
  PolicyParams q = load_policy(path);
  std::vector<double*> a = param_refs(p);
  std::vector<double*> b = param_refs(q);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  std::remove(path.c_str());
}
