#pragma once

#include <string>
#include <vector>

#include "crowdsim/config.hpp"
#include "crowdsim/reward_analysis.hpp"

namespace crowdsim {

// $CROWDSIM_OUTPUT_DIR when set, else "runs".
std::string default_output_dir();

// Trains n_seeds runs (seeds = ppo.seed + index), writing per-seed
// TrainingLog CSVs and checkpoints plus an aggregate summary.json of
// final-window metrics (mean +- standard error over seeds). Returns the
// summary as JSON.
nlohmann::json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                              int jobs = 1, bool quiet = false);

// Final-window scalar used for ranking and summaries: per-column mean over
// the last min(10, rows) iterations.
IterationRow final_window_mean(const TrainingLog& log);

// Loads a checkpoint and runs n_episodes without learning; writes a
// per-episode metrics CSV and returns the rows.
std::vector<Metrics> evaluate_checkpoint(const ExperimentConfig& cfg,
                                         const std::string& checkpoint_path, int n_episodes,
                                         ActionMode mode, const std::string& out_csv);

struct SweepSpec {
  std::string axis;             // dotted config path, e.g. "reward.c_c"
  std::vector<double> values;
  int seeds_per_value = 3;
};

// Shipped presets from the paper's experiments.
SweepSpec collision_penalty_preset(int seeds_per_value = 3);
SweepSpec exponent_preset(int seeds_per_value = 3);

struct SweepRowResult {
  double value = 0.0;
  double reward_mean = 0.0, reward_sem = 0.0;
  double energy_mean = 0.0, energy_sem = 0.0;
  double success_mean = 0.0, success_sem = 0.0;
  double collisions_mean = 0.0, collisions_sem = 0.0;
};

// One run group per value; rows aggregate the final-window metrics over
// seeds. jobs > 1 trains runs on worker threads (results are positionally
// stored, so the output is independent of scheduling).
std::vector<SweepRowResult> run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                      const std::string& out_dir, int jobs = 1,
                                      bool quiet = false);

struct AnalyzeResult {
  double v_star_default = 0.0;      // argmax of the return, config as given
  double v_star_ce2 = 0.0;          // argmax with c_e = 2
  double ce_star = 0.0;             // argmin of the normalized MSE
  double cv_threshold_value = 0.0;  // c_e = 1 transition point
  double discounted_energy_argmax = 0.0;
};

// Reproduces the closed-form reward/energy analysis: writes curve CSVs into
// out_dir and prints the located optima to stdout.
AnalyzeResult analyze(const SimpleModelParams& params, const std::string& out_dir);

struct SearchSample {
  int index = 0;
  double learning_rate = 0.0;
  double clip_eps = 0.0;
  double entropy_coef = 0.0;
  int trunk_width = 0;
  int trunk_depth = 0;
  double final_reward = 0.0;
};

// Seeded random hyperparameter search; each sample trains with the base
// config's (reduced) iteration budget and is ranked by the final-window mean
// episodic reward. Writes ranked.csv and the top configs as JSON.
std::vector<SearchSample> run_search(const ExperimentConfig& base, int n_samples,
                                     const std::string& out_dir, int jobs = 1,
                                     bool quiet = false);

// Convenience for trend checks: trains one run and returns the final-window
// mean episodic reward.
double train_final_reward(const ExperimentConfig& cfg, std::uint64_t seed);

double standard_error(const std::vector<double>& xs);

}  // namespace crowdsim
