#include "crowdsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace crowdsim {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const std::uint8_t> dones, double bootstrap, double gamma,
                 double lambda, std::span<double> advantages, std::span<double> returns) {
  const int n = static_cast<int>(rewards.size());
  double next_adv = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double not_done = dones[t] ? 0.0 : 1.0;
    const double next_value = t + 1 < n ? values[t + 1] : bootstrap;
    const double delta = rewards[t] + gamma * next_value * not_done - values[t];
    next_adv = delta + gamma * lambda * not_done * next_adv;
    advantages[t] = next_adv;
    returns[t] = next_adv + values[t];
  }
}

namespace {

Vec2 clamp_action(Vec2 a) { return {clamp_unit(a.x), clamp_unit(a.y)}; }

double total_reward(const StepRewardBreakdown& r) { return r.total(); }

void accumulate_episode(IterationRow& row, const Metrics& m) {
  row.reward_total += m.reward_total;
  row.reward_goal += m.reward_goal;
  row.reward_progress += m.reward_progress;
  row.reward_speed += m.reward_speed;
  row.reward_collision += m.reward_collision;
  row.reward_urgency += m.reward_urgency;
  row.energy += m.energy_mean;
  row.success += m.success_rate;
  row.collisions += m.collision_count;
  row.mean_speed += m.mean_speed_moving;
  ++row.episodes;
}

void average_episodes(IterationRow& row) {
  if (row.episodes == 0) return;
  const double n = row.episodes;
  row.reward_total /= n;
  row.reward_goal /= n;
  row.reward_progress /= n;
  row.reward_speed /= n;
  row.reward_collision /= n;
  row.reward_urgency /= n;
  row.energy /= n;
  row.success /= n;
  row.collisions /= n;
  row.mean_speed /= n;
}

}  // namespace

Trainer::Trainer(EnvConfig env_cfg, PpoConfig ppo_cfg)
    : env_cfg_(std::move(env_cfg)),
      cfg_(std::move(ppo_cfg)),
      params_(init_policy(make_arch(env_cfg_.perception, cfg_.trunk, cfg_.psi, cfg_.phi),
                          cfg_.seed)),
      update_rng_(mix_seed(cfg_.seed, 0x5eedu)) {
  worlds_.reserve(cfg_.n_parallel_worlds);
  for (int w = 0; w < cfg_.n_parallel_worlds; ++w) {
    worlds_.emplace_back(env_cfg_);
    reset_counters_.push_back(0);
    worlds_[w].reset(mix_seed(cfg_.seed, (w << 20) | reset_counters_[w]++));
    world_rngs_.emplace_back(mix_seed(cfg_.seed, 0xac7100u + w));
  }
  open_segment_.assign(cfg_.n_parallel_worlds, {});
}

void Trainer::finish_segments_for_world(int w, bool value_bootstrap) {
  RolloutBuffer& buf = *collecting_;
  for (int agent = 0; agent < static_cast<int>(open_segment_[w].size()); ++agent) {
    const int seg = open_segment_[w][agent];
    if (seg < 0) continue;
    double bootstrap = 0.0;
    if (value_bootstrap) bootstrap = forward(params_, worlds_[w].observe(agent)).value;
    buf.segments[seg].bootstrap = bootstrap;
    open_segment_[w][agent] = -1;
  }
}

RolloutBuffer Trainer::collect_rollouts() {
  RolloutBuffer buf;
  collecting_ = &buf;

  for (int w = 0; w < cfg_.n_parallel_worlds; ++w) {
    Environment& env = worlds_[w];
    std::mt19937_64& rng = world_rngs_[w];
    std::normal_distribution<double> normal(0.0, 1.0);
    open_segment_[w].assign(env.n_agents(), -1);

    for (int step_i = 0; step_i < cfg_.steps_per_iteration; ++step_i) {
      const int n = env.n_agents();
      std::vector<Vec2> actions(n);
      std::vector<Observation> observations(n);
      std::vector<double> log_probs(n, 0.0), values(n, 0.0);
      std::vector<std::uint8_t> emits(n, 0);
      for (int i = 0; i < n; ++i) {
        if (env.world().agents[i].reached_goal) continue;
        observations[i] = env.observe(i);
        const PolicyOutput out = forward(params_, observations[i]);
        const double zx = normal(rng);
        const double zy = normal(rng);
        actions[i] = {out.action_mean.x + out.action_std.x * zx,
                      out.action_mean.y + out.action_std.y * zy};
        log_probs[i] = log_prob_and_entropy(out, actions[i]).log_prob;
        values[i] = out.value;
        emits[i] = 1;
      }
      const Environment::StepResult res = env.step(actions);

      for (int i = 0; i < n; ++i) {
        if (!emits[i]) continue;
        Transition tr;
        tr.world = w;
        tr.agent = i;
        tr.obs = std::move(observations[i]);
        tr.action = actions[i];
        tr.log_prob = log_probs[i];
        tr.reward = total_reward(res.rewards[i]);
        tr.value = values[i];
        tr.done = res.newly_reached[i] != 0;
        const int idx = static_cast<int>(buf.transitions.size());
        buf.transitions.push_back(std::move(tr));
        int& seg = open_segment_[w][i];
        if (seg < 0) {
          seg = static_cast<int>(buf.segments.size());
          buf.segments.push_back({});
        }
        buf.segments[seg].idx.push_back(idx);
        if (res.newly_reached[i]) seg = -1;  // terminal: no bootstrap
      }

      if (res.terminal) {
        // Time-limit truncation bootstraps from the post-step state; if all
        // agents reached, everything closed terminally already.
        finish_segments_for_world(w, !env.world().all_reached());
        buf.finished_episodes.push_back(episode_metrics(env.log(), EnergyModel{}));
        env.reset(mix_seed(cfg_.seed, (static_cast<std::uint64_t>(w) << 20) |
                                          reset_counters_[w]++));
        open_segment_[w].assign(env.n_agents(), -1);
      }
    }
    finish_segments_for_world(w, true);  // window truncation
  }

  buf.advantages.assign(buf.transitions.size(), 0.0);
  buf.returns.assign(buf.transitions.size(), 0.0);
  for (const RolloutBuffer::Segment& seg : buf.segments) {
    const int len = static_cast<int>(seg.idx.size());
    std::vector<double> rewards(len), values(len), adv(len), ret(len);
    std::vector<std::uint8_t> dones(len);
    for (int k = 0; k < len; ++k) {
      const Transition& tr = buf.transitions[seg.idx[k]];
      rewards[k] = tr.reward;
      values[k] = tr.value;
      dones[k] = tr.done ? 1 : 0;
    }
    compute_gae(rewards, values, dones, seg.bootstrap, cfg_.gamma, cfg_.gae_lambda, adv, ret);
    for (int k = 0; k < len; ++k) {
      buf.advantages[seg.idx[k]] = adv[k];
      buf.returns[seg.idx[k]] = ret[k];
    }
  }
  collecting_ = nullptr;
  return buf;
}

UpdateStats Trainer::ppo_update(RolloutBuffer& buffer) {
  UpdateStats stats;
  const size_t n = buffer.transitions.size();
  if (n == 0) throw std::invalid_argument("ppo_update: empty buffer");

  double mean = 0.0;
  for (double a : buffer.advantages) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : buffer.advantages) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / n);
  stats.advantage_mean = mean;
  stats.advantage_std = stddev;
  std::vector<double> norm_adv(n);
  for (size_t i = 0; i < n; ++i)
    norm_adv[i] = (buffer.advantages[i] - mean) / (stddev + 1e-8);

  // Snapshot for restore-on-abort.
  PolicyParams snapshot = params_;
  std::vector<double*> refs = param_refs(params_);
  if (adam_m_.empty()) {
    adam_m_.assign(refs.size(), 0.0);
    adam_v_.assign(refs.size(), 0.0);
  }
  std::vector<double>& m = adam_m_;
  std::vector<double>& v = adam_v_;

  PolicyParams grads = zeros_like(params_);
  std::vector<double*> grad_refs = param_refs(grads);
  const PpoLossSpec loss_spec{cfg_.clip_eps, cfg_.value_coef, cfg_.entropy_coef};

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int minibatches = 0;

  try {
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), update_rng_);
      for (size_t start = 0; start < n; start += cfg_.minibatch_size) {
        const size_t end = std::min(n, start + cfg_.minibatch_size);
        std::vector<PpoSample> batch;
        batch.reserve(end - start);
        for (size_t k = start; k < end; ++k) {
          const Transition& tr = buffer.transitions[order[k]];
          batch.push_back({&tr.obs, tr.action, tr.log_prob, norm_adv[order[k]],
                           buffer.returns[order[k]]});
        }
        for (double* g : grad_refs) *g = 0.0;
        const PpoBatchStats bs = ppo_backward(params_, batch, loss_spec, grads);
        stats.loss += bs.loss;
        stats.policy_loss += bs.policy_loss;
        stats.value_loss += bs.value_loss;
        stats.entropy += bs.entropy;
        stats.clip_fraction += bs.clip_fraction;
        stats.approx_kl += bs.approx_kl;
        ++minibatches;

        if (cfg_.max_grad_norm > 0.0) {
          double norm_sq = 0.0;
          for (double* g : grad_refs) norm_sq += *g * *g;
          const double norm = std::sqrt(norm_sq);
          if (norm > cfg_.max_grad_norm) {
            const double scale = cfg_.max_grad_norm / norm;
            for (double* g : grad_refs) *g *= scale;
          }
        }
        ++adam_t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, adam_t_);
        const double bc2 = 1.0 - std::pow(b2, adam_t_);
        for (size_t i = 0; i < refs.size(); ++i) {
          const double g = *grad_refs[i];
          m[i] = b1 * m[i] + (1.0 - b1) * g;
          v[i] = b2 * v[i] + (1.0 - b2) * g * g;
          *refs[i] -= cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
        params_.log_std[0] = std::clamp(params_.log_std[0], kLogStdMin, kLogStdMax);
        params_.log_std[1] = std::clamp(params_.log_std[1], kLogStdMin, kLogStdMax);
      }
    }
  } catch (const std::runtime_error&) {
    // Non-finite loss: roll the whole iteration back.
    std::vector<double*> dst = param_refs(params_);
    std::vector<double*> src = param_refs(snapshot);
    for (size_t i = 0; i < dst.size(); ++i) *dst[i] = *src[i];
    stats.aborted = true;
  }

  if (minibatches > 0) {
    stats.loss /= minibatches;
    stats.policy_loss /= minibatches;
    stats.value_loss /= minibatches;
    stats.entropy /= minibatches;
    stats.clip_fraction /= minibatches;
    stats.approx_kl /= minibatches;
  }
  return stats;
}

IterationRow Trainer::run_iteration() {
  RolloutBuffer buf = collect_rollouts();
  const UpdateStats us = ppo_update(buf);

  IterationRow row;
  row.iteration = iteration_++;
  row.transitions = static_cast<int>(buf.transitions.size());
  for (const Metrics& m : buf.finished_episodes) accumulate_episode(row, m);
  if (row.episodes > 0) {
    average_episodes(row);
    IterationRow keep = row;
    keep.iteration = 0;
    last_episode_stats_ = keep;
  } else {
    const int it = row.iteration;
    const int tr = row.transitions;
    row = last_episode_stats_;
    row.iteration = it;
    row.transitions = tr;
    row.episodes = 0;
  }
  row.loss = us.loss;
  row.policy_loss = us.policy_loss;
  row.value_loss = us.value_loss;
  row.entropy = us.entropy;
  row.clip_fraction = us.clip_fraction;
  row.approx_kl = us.approx_kl;
  log_.rows.push_back(row);
  return row;
}

TrainResult train(const EnvConfig& env_cfg, const PpoConfig& ppo_cfg, int n_iterations,
                  const IterationCallback& callback) {
  Trainer trainer(env_cfg, ppo_cfg);
  for (int i = 0; i < n_iterations; ++i) {
    const IterationRow row = trainer.run_iteration();
    if (callback) callback(row, trainer.params());
  }
  return {trainer.params(), trainer.log()};
}

std::vector<Metrics> evaluate(const PolicyParams& params, const EnvConfig& env_cfg,
                              int n_episodes, ActionMode mode, std::uint64_t base_seed) {
  std::vector<Metrics> out;
  out.reserve(n_episodes);
  Environment env(env_cfg);
  for (int e = 0; e < n_episodes; ++e) {
    env.reset(mix_seed(base_seed, e));
    std::mt19937_64 rng(mix_seed(base_seed, 0xe7a1u + e));
    std::normal_distribution<double> normal(0.0, 1.0);
    while (!env.world().terminal()) {
      const int n = env.n_agents();
      std::vector<Vec2> actions(n);
      for (int i = 0; i < n; ++i) {
        if (env.world().agents[i].reached_goal) continue;
        const PolicyOutput o = forward(params, env.observe(i));
        Vec2 a = o.action_mean;
        if (mode == ActionMode::sample) {
          a.x += o.action_std.x * normal(rng);
          a.y += o.action_std.y * normal(rng);
        }
        actions[i] = clamp_action(a);
      }
      env.step(actions);
    }
    out.push_back(episode_metrics(env.log(), EnergyModel{}));
  }
  return out;
}

}  // namespace crowdsim
