#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crowdsim/harness.hpp"

using namespace crowdsim;

int main(int argc, char** argv) {
  CLI::App app{"crowd: 2D crowd simulation and PPO training toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  int jobs = 1;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config)
      cmd->add_option("-c,--config", config_path, "experiment config file (JSON)")->required();
    cmd->add_option("--set", overrides, "dotted override, e.g. --set reward.c_c=0.1");
    cmd->add_option("-o,--out", out_dir, "output directory (default: $CROWDSIM_OUTPUT_DIR or 'runs')");
    cmd->add_option("-j,--jobs", jobs, "worker threads for independent runs");
  };

  // run
  CLI::App* run_cmd = app.add_subcommand("run", "train n_seeds runs and aggregate a summary");
  add_common(run_cmd);

  // evaluate
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "roll out a trained checkpoint");
  add_common(eval_cmd);
  std::string checkpoint;
  int n_episodes = 20;
  std::string action_mode = "mean";
  eval_cmd->add_option("--checkpoint", checkpoint, "policy checkpoint JSON")->required();
  eval_cmd->add_option("--episodes", n_episodes, "number of evaluation episodes");
  eval_cmd->add_option("--action-mode", action_mode, "mean | sample")
      ->check(CLI::IsMember({"mean", "sample"}));

  // sweep
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run-group per value of one config axis");
  add_common(sweep_cmd);
  std::string axis, preset;
  std::vector<double> values;
  int seeds_per_value = 3;
  sweep_cmd->add_option("--axis", axis, "dotted numeric config path, e.g. reward.c_c");
  sweep_cmd->add_option("--values", values, "sweep values");
  sweep_cmd->add_option("--preset", preset, "collision-penalty | exponent")
      ->check(CLI::IsMember({"collision-penalty", "exponent"}));
  sweep_cmd->add_option("--seeds", seeds_per_value, "seeds per value");

  // analyze
  CLI::App* an_cmd = app.add_subcommand("analyze", "closed-form reward/energy curves and optima");
  add_common(an_cmd, false);
  double an_d = 8.0, an_dt = 1.0 / 12.0, an_ce = 1.0, an_cv = 0.75, an_gamma = 0.99;
  int an_tmax = 200;
  an_cmd->add_option("--distance", an_d, "travel distance d (m)");
  an_cmd->add_option("--t-max", an_tmax, "step horizon");
  an_cmd->add_option("--dt", an_dt, "decision timestep (s)");
  an_cmd->add_option("--c-e", an_ce, "velocity reward exponent");
  an_cmd->add_option("--c-v", an_cv, "velocity reward coefficient");
  an_cmd->add_option("--gamma", an_gamma, "discount factor");

  // search
  CLI::App* search_cmd = app.add_subcommand("search", "seeded random hyperparameter search");
  add_common(search_cmd);
  int n_samples = 10;
  search_cmd->add_option("--samples", n_samples, "number of sampled configurations");

  CLI11_PARSE(app, argc, argv);

  try {
    if (out_dir.empty()) out_dir = default_output_dir();

    if (run_cmd->parsed()) {
      ExperimentConfig cfg = load_experiment_config(config_path, overrides);
      if (cfg.output_dir != "runs" && out_dir == default_output_dir()) out_dir = cfg.output_dir;
      run_experiment(cfg, out_dir, jobs);
      std::cout << "summary written to " << out_dir << "/summary.json\n";
    } else if (eval_cmd->parsed()) {
      ExperimentConfig cfg = load_experiment_config(config_path, overrides);
      const ActionMode mode = action_mode == "sample" ? ActionMode::sample : ActionMode::mean;
      const auto episodes =
          evaluate_checkpoint(cfg, checkpoint, n_episodes, mode, out_dir + "/eval.csv");
      double success = 0.0, energy = 0.0;
      for (const Metrics& m : episodes) {
        success += m.success_rate;
        energy += m.energy_mean;
      }
      const double n = std::max<size_t>(1, episodes.size());
      std::cout << "episodes: " << episodes.size() << "  success: " << success / n
                << "  energy: " << energy / n << " J/kg\n";
    } else if (sweep_cmd->parsed()) {
      ExperimentConfig cfg = load_experiment_config(config_path, overrides);
      SweepSpec spec;
      if (preset == "collision-penalty") {
        spec = collision_penalty_preset(seeds_per_value);
      } else if (preset == "exponent") {
        spec = exponent_preset(seeds_per_value);
      } else if (!axis.empty() && !values.empty()) {
        spec = {axis, values, seeds_per_value};
      } else {
        std::cerr << "sweep: give --preset or both --axis and --values\n";
        return 1;
      }
      run_sweep(cfg, spec, out_dir, jobs);
      std::cout << "sweep table written to " << out_dir << "/sweep.csv\n";
    } else if (an_cmd->parsed()) {
      SimpleModelParams p;
      p.d = an_d;
      p.t_max = an_tmax;
      p.dt = an_dt;
      p.reward.c_e = an_ce;
      p.reward.c_v = an_cv;
      p.reward.gamma = an_gamma;
      analyze(p, out_dir);
    } else if (search_cmd->parsed()) {
      ExperimentConfig cfg = load_experiment_config(config_path, overrides);
      run_search(cfg, n_samples, out_dir, jobs);
      std::cout << "ranked results written to " << out_dir << "/ranked.csv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
