#include "crowdsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <thread>

#include "crowdsim/csv.hpp"

namespace fs = std::filesystem;

namespace crowdsim {
namespace {

const std::vector<std::string> kTrainColumns = {
    "iteration",   "transitions", "episodes",        "reward_total", "reward_goal",
    "reward_progress", "reward_speed", "reward_collision", "reward_urgency", "energy",
    "success",     "collisions",  "mean_speed",      "loss",         "policy_loss",
    "value_loss",  "entropy",     "clip_fraction",   "approx_kl"};

std::vector<double> row_values(const IterationRow& r) {
  return {static_cast<double>(r.iteration),
          static_cast<double>(r.transitions),
          static_cast<double>(r.episodes),
          r.reward_total,
          r.reward_goal,
          r.reward_progress,
          r.reward_speed,
          r.reward_collision,
          r.reward_urgency,
          r.energy,
          r.success,
          r.collisions,
          r.mean_speed,
          r.loss,
          r.policy_loss,
          r.value_loss,
          r.entropy,
          r.clip_fraction,
          r.approx_kl};
}

// Runs `tasks` indices [0, n) on up to `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& task) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(jobs, n);
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&next, n, &task]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) task(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

struct SeedRunResult {
  TrainingLog log;
  IterationRow final_window;
};

SeedRunResult run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& csv_path, const std::string& checkpoint_path) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.ppo.seed = seed;
  const std::string comment =
      "config_hash=" + config_hash_hex(cfg) + " seed=" + std::to_string(seed);

  std::unique_ptr<CsvWriter> csv;
  if (!csv_path.empty()) csv = std::make_unique<CsvWriter>(csv_path, comment, kTrainColumns);
  const IterationCallback cb = [&csv](const IterationRow& row, const PolicyParams&) {
    if (csv) csv->row(row_values(row));
  };
  TrainResult result = train(run_cfg.env(), run_cfg.ppo, run_cfg.n_iterations, cb);
  if (!checkpoint_path.empty()) save_policy(result.params, checkpoint_path);

  SeedRunResult out;
  out.final_window = final_window_mean(result.log);
  out.log = std::move(result.log);
  return out;
}

nlohmann::json mean_sem_json(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.empty() ? 1 : xs.size();
  return {{"mean", mean}, {"sem", standard_error(xs)}};
}

}  // namespace

std::string default_output_dir() {
  const char* env = std::getenv("CROWDSIM_OUTPUT_DIR");
  return env && *env ? env : "runs";
}

double standard_error(const std::vector<double>& xs) {
  const size_t n = xs.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= (n - 1);
  return std::sqrt(var / n);
}

IterationRow final_window_mean(const TrainingLog& log) {
  IterationRow mean;
  if (log.rows.empty()) return mean;
  const int window = std::min<int>(10, static_cast<int>(log.rows.size()));
  const int start = static_cast<int>(log.rows.size()) - window;
  for (int i = start; i < static_cast<int>(log.rows.size()); ++i) {
    const IterationRow& r = log.rows[i];
    mean.reward_total += r.reward_total;
    mean.reward_goal += r.reward_goal;
    mean.reward_progress += r.reward_progress;
    mean.reward_speed += r.reward_speed;
    mean.reward_collision += r.reward_collision;
    mean.reward_urgency += r.reward_urgency;
    mean.energy += r.energy;
    mean.success += r.success;
    mean.collisions += r.collisions;
    mean.mean_speed += r.mean_speed;
  }
  const double w = window;
  mean.reward_total /= w;
  mean.reward_goal /= w;
  mean.reward_progress /= w;
  mean.reward_speed /= w;
  mean.reward_collision /= w;
  mean.reward_urgency /= w;
  mean.energy /= w;
  mean.success /= w;
  mean.collisions /= w;
  mean.mean_speed /= w;
  mean.iteration = log.rows.back().iteration;
  return mean;
}

nlohmann::json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, int jobs,
                              bool quiet) {
  validate(cfg);
  fs::create_directories(out_dir);
  std::vector<SeedRunResult> results(cfg.n_seeds);
  std::vector<std::uint64_t> seeds(cfg.n_seeds);
  for (int s = 0; s < cfg.n_seeds; ++s) seeds[s] = cfg.ppo.seed + s;

  parallel_for(cfg.n_seeds, jobs, [&](int s) {
    const std::string base = out_dir + "/seed" + std::to_string(seeds[s]);
    results[s] = run_one_seed(cfg, seeds[s], base + "_train.csv", base + "_policy.json");
    if (!quiet)
      std::cout << "seed " << seeds[s] << ": final reward "
                << results[s].final_window.reward_total << ", success "
                << results[s].final_window.success << "\n";
  });

  auto gather = [&results](double IterationRow::* field) {
    std::vector<double> xs;
    xs.reserve(results.size());
    for (const SeedRunResult& r : results) xs.push_back(r.final_window.*field);
    return xs;
  };

  nlohmann::json summary;
  summary["config"] = experiment_to_json(cfg);
  summary["config_hash"] = config_hash_hex(cfg);
  summary["seeds"] = seeds;
  summary["window"] = "mean over final 10 iterations";
  summary["metrics"] = {
      {"reward_total", mean_sem_json(gather(&IterationRow::reward_total))},
      {"reward_goal", mean_sem_json(gather(&IterationRow::reward_goal))},
      {"reward_progress", mean_sem_json(gather(&IterationRow::reward_progress))},
      {"reward_speed", mean_sem_json(gather(&IterationRow::reward_speed))},
      {"reward_collision", mean_sem_json(gather(&IterationRow::reward_collision))},
      {"reward_urgency", mean_sem_json(gather(&IterationRow::reward_urgency))},
      {"energy", mean_sem_json(gather(&IterationRow::energy))},
      {"success", mean_sem_json(gather(&IterationRow::success))},
      {"collisions", mean_sem_json(gather(&IterationRow::collisions))},
      {"mean_speed", mean_sem_json(gather(&IterationRow::mean_speed))},
  };
  std::ofstream out(out_dir + "/summary.json");
  out << summary.dump(2) << "\n";
  return summary;
}

std::vector<Metrics> evaluate_checkpoint(const ExperimentConfig& cfg,
                                         const std::string& checkpoint_path, int n_episodes,
                                         ActionMode mode, const std::string& out_csv) {
  validate(cfg);
  const PolicyParams params = load_policy(checkpoint_path);
  const ArchitectureSpec expected =
      make_arch(cfg.perception, cfg.ppo.trunk, cfg.ppo.psi, cfg.ppo.phi);
  if (params.arch.ray_dim != expected.ray_dim ||
      params.arch.has_neighbors != expected.has_neighbors)
    throw std::runtime_error("evaluate: checkpoint layout does not match the perception config");

  const std::vector<Metrics> episodes =
      evaluate(params, cfg.env(), n_episodes, mode, cfg.ppo.seed);

  if (!out_csv.empty()) {
    CsvWriter csv(out_csv,
                  "config_hash=" + config_hash_hex(cfg) + " seed=" + std::to_string(cfg.ppo.seed),
                  {"episode", "success", "energy", "collisions", "mean_speed", "reward_total",
                   "episode_steps"});
    for (size_t e = 0; e < episodes.size(); ++e) {
      const Metrics& m = episodes[e];
      csv.row({static_cast<double>(e), m.success_rate, m.energy_mean, m.collision_count,
               m.mean_speed_moving, m.reward_total, static_cast<double>(m.episode_steps)});
    }
  }
  return episodes;
}

SweepSpec collision_penalty_preset(int seeds_per_value) {
  return {"reward.c_c", {0.0, 0.01, 0.05, 0.1, 1.0, 20.0}, seeds_per_value};
}

SweepSpec exponent_preset(int seeds_per_value) {
  return {"reward.c_e", {1.0, 1.5, 2.0, 2.5, 3.0}, seeds_per_value};
}

std::vector<SweepRowResult> run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                      const std::string& out_dir, int jobs, bool quiet) {
  if (spec.values.empty()) throw std::runtime_error("sweep: no values given");
  if (spec.seeds_per_value < 1) throw std::runtime_error("sweep: seeds_per_value must be >= 1");
  fs::create_directories(out_dir);

  // Validate the axis once up front.
  {
    nlohmann::json probe = experiment_to_json(base);
    apply_override(probe, spec.axis + "=" + std::to_string(spec.values.front()));
    experiment_from_json(probe);
  }

  const int n_values = static_cast<int>(spec.values.size());
  const int runs = n_values * spec.seeds_per_value;
  std::vector<IterationRow> finals(runs);

  parallel_for(runs, jobs, [&](int r) {
    const int vi = r / spec.seeds_per_value;
    const int si = r % spec.seeds_per_value;
    nlohmann::json j = experiment_to_json(base);
    apply_override(j, spec.axis + "=" + std::to_string(spec.values[vi]));
    ExperimentConfig cfg = experiment_from_json(j);
    const std::uint64_t seed = cfg.ppo.seed + si;
    char name[64];
    std::snprintf(name, sizeof(name), "/value%d_seed%d_train.csv", vi, si);
    const SeedRunResult res = run_one_seed(cfg, seed, out_dir + name, "");
    finals[r] = res.final_window;
    if (!quiet)
      std::cout << spec.axis << "=" << spec.values[vi] << " seed " << seed << ": reward "
                << res.final_window.reward_total << ", success " << res.final_window.success
                << "\n";
  });

  std::vector<SweepRowResult> rows;
  CsvWriter csv(out_dir + "/sweep.csv",
                "config_hash=" + config_hash_hex(base) + " seed=" +
                    std::to_string(base.ppo.seed) + " axis=" + spec.axis,
                {"value", "reward_mean", "reward_sem", "energy_mean", "energy_sem",
                 "success_mean", "success_sem", "collisions_mean", "collisions_sem"});
  for (int vi = 0; vi < n_values; ++vi) {
    std::vector<double> reward, energy, success, collisions;
    for (int si = 0; si < spec.seeds_per_value; ++si) {
      const IterationRow& f = finals[vi * spec.seeds_per_value + si];
      reward.push_back(f.reward_total);
      energy.push_back(f.energy);
      success.push_back(f.success);
      collisions.push_back(f.collisions);
    }
    auto mean = [](const std::vector<double>& xs) {
      double m = 0.0;
      for (double x : xs) m += x;
      return m / xs.size();
    };
    SweepRowResult row;
    row.value = spec.values[vi];
    row.reward_mean = mean(reward);
    row.reward_sem = standard_error(reward);
    row.energy_mean = mean(energy);
    row.energy_sem = standard_error(energy);
    row.success_mean = mean(success);
    row.success_sem = standard_error(success);
    row.collisions_mean = mean(collisions);
    row.collisions_sem = standard_error(collisions);
    rows.push_back(row);
    csv.row({row.value, row.reward_mean, row.reward_sem, row.energy_mean, row.energy_sem,
             row.success_mean, row.success_sem, row.collisions_mean, row.collisions_sem});
  }
  return rows;
}

AnalyzeResult analyze(const SimpleModelParams& params, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const EnergyModel energy;
  const std::string comment = "simplified-return analysis d=" + std::to_string(params.d) +
                              " t_max=" + std::to_string(params.t_max);

  AnalyzeResult res;
  {
    // Return and raw negative trip energy over the velocity grid, plus the
    // c_e = 2 return for shape comparison.
    CsvWriter csv(out_dir + "/return_energy_curve.csv", comment,
                  {"v", "return", "return_ce2", "neg_trip_energy"});
    SimpleModelParams ce2 = params;
    ce2.reward.c_e = 2.0;
    for (int i = 0; i <= 2000; ++i) {
      const double v = i * 1e-3;
      csv.row({v, simplified_return(v, params), simplified_return(v, ce2),
               -trip_energy(v, params, energy)});
    }
  }
  {
    CsvWriter csv(out_dir + "/discounted_energy_curve.csv", comment, {"v", "discounted_energy"});
    double best_v = 0.0, best = -1e300;
    for (int i = 0; i <= 2000; ++i) {
      const double v = i * 1e-3;
      const double r = discounted_energy_return(v, params, energy);
      csv.row({v, r});
      if (r > best) {
        best = r;
        best_v = v;
      }
    }
    res.discounted_energy_argmax = best_v;
  }
  {
    CsvWriter csv(out_dir + "/mse_sweep.csv", comment, {"c_e", "mse"});
    for (int i = 0; i <= 200; ++i) {
      const double ce = 1.0 + i * 0.01;
      csv.row({ce, normalized_mse(params, ce)});
    }
    res.ce_star = optimal_exponent(params);
  }
  {
    std::vector<double> cv_grid;
    for (double cv = 0.01; cv <= 0.2001; cv += 0.01) cv_grid.push_back(cv);
    const std::vector<SweepRow> sweep = coefficient_sweep(params, SweepAxis::c_v, cv_grid);
    CsvWriter csv(out_dir + "/cv_sweep.csv", comment, {"c_v", "optimal_velocity"});
    for (const SweepRow& r : sweep) csv.row({r.value, r.optimal_v});
    res.cv_threshold_value = cv_threshold(params);
  }
  res.v_star_default = optimal_velocity(params);
  {
    SimpleModelParams ce2 = params;
    ce2.reward.c_e = 2.0;
    res.v_star_ce2 = optimal_velocity(ce2);
  }

  std::cout << "optimal velocity (config as given): v* = " << res.v_star_default << " m/s\n"
            << "optimal velocity (c_e = 2):        v* = " << res.v_star_ce2 << " m/s\n"
            << "best-matching exponent:            c_e* = " << res.ce_star << "\n"
            << "c_v threshold (c_e = 1):           " << res.cv_threshold_value << "\n"
            << "discounted-energy argmax:          v = " << res.discounted_energy_argmax
            << " m/s\n";
  return res;
}

std::vector<SearchSample> run_search(const ExperimentConfig& base, int n_samples,
                                     const std::string& out_dir, int jobs, bool quiet) {
  if (n_samples < 1) throw std::runtime_error("search: n_samples must be >= 1");
  fs::create_directories(out_dir);

  std::mt19937_64 rng(base.ppo.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int width_choices[] = {32, 64, 128};

  std::vector<SearchSample> samples(n_samples);
  std::vector<ExperimentConfig> configs(n_samples, base);
  for (int i = 0; i < n_samples; ++i) {
    SearchSample& s = samples[i];
    s.index = i;
    s.learning_rate = std::pow(10.0, -4.0 + 1.5 * unit(rng));     // [1e-4, ~3e-3] log-uniform
    s.clip_eps = 0.1 + 0.2 * unit(rng);                           // [0.1, 0.3]
    s.entropy_coef = std::pow(10.0, -5.0 + 3.0 * unit(rng));      // [1e-5, 1e-2] log-uniform
    s.trunk_width = width_choices[static_cast<int>(unit(rng) * 3.0) % 3];
    s.trunk_depth = 2 + (static_cast<int>(unit(rng) * 2.0) % 2);  // 2 or 3

    ExperimentConfig& cfg = configs[i];
    cfg.ppo.learning_rate = s.learning_rate;
    cfg.ppo.clip_eps = s.clip_eps;
    cfg.ppo.entropy_coef = s.entropy_coef;
    cfg.ppo.trunk.widths.assign(s.trunk_depth, s.trunk_width);
  }

  parallel_for(n_samples, jobs, [&](int i) {
    const SeedRunResult res = run_one_seed(configs[i], configs[i].ppo.seed, "", "");
    samples[i].final_reward = res.final_window.reward_total;
    if (!quiet)
      std::cout << "sample " << i << ": lr " << samples[i].learning_rate << " reward "
                << samples[i].final_reward << "\n";
  });

  std::vector<SearchSample> ranked = samples;
  std::stable_sort(ranked.begin(), ranked.end(), [](const SearchSample& a, const SearchSample& b) {
    return a.final_reward > b.final_reward;
  });

  CsvWriter csv(out_dir + "/ranked.csv",
                "config_hash=" + config_hash_hex(base) + " seed=" + std::to_string(base.ppo.seed) +
                    " ranking=mean reward_total over final 10 iterations",
                {"rank", "sample", "final_reward", "learning_rate", "clip_eps", "entropy_coef",
                 "trunk_width", "trunk_depth"});
  for (size_t r = 0; r < ranked.size(); ++r) {
    const SearchSample& s = ranked[r];
    csv.row({static_cast<double>(r), static_cast<double>(s.index), s.final_reward,
             s.learning_rate, s.clip_eps, s.entropy_coef, static_cast<double>(s.trunk_width),
             static_cast<double>(s.trunk_depth)});
  }
  const int top_k = std::min<int>(5, n_samples);
  nlohmann::json top = nlohmann::json::array();
  for (int r = 0; r < top_k; ++r) top.push_back(experiment_to_json(configs[ranked[r].index]));
  std::ofstream out(out_dir + "/top_configs.json");
  out << top.dump(2) << "\n";
  return ranked;
}

double train_final_reward(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.ppo.seed = seed;
  const TrainResult result = train(run_cfg.env(), run_cfg.ppo, run_cfg.n_iterations);
  return final_window_mean(result.log).reward_total;
}

}  // namespace crowdsim
