#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdsim/env.hpp"
#include "crowdsim/trainer.hpp"

namespace crowdsim {

// Full experiment description: the environment design choices plus training
// and run bookkeeping. Everything except scenario.kind has a default.
struct ExperimentConfig {
  ScenarioConfig scenario;
  PerceptionConfig perception;
  DynamicsConfig dynamics;
  RewardConfig reward;
  PpoConfig ppo;
  int n_iterations = 100;
  int n_seeds = 1;
  std::string output_dir = "runs";

  EnvConfig env() const { return {scenario, perception, dynamics, reward}; }
};

// Strict deserialization: unknown keys are errors, scenario.kind is
// required, all other fields fall back to defaults. Throws
// std::runtime_error with the offending key path.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);

// Reads and parses a config file, applying dotted overrides
// ("reward.c_c=0.1") on the raw tree before deserialization.
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides = {});

// Sets root[path] = parsed value; path is dot-separated. The path must lead
// through objects only.
void apply_override(nlohmann::json& root, const std::string& assignment);

// Validates spec invariants (ranges, widths, lambda coupling); throws on
// violation.
void validate(const ExperimentConfig& cfg);

// FNV-1a over the canonical JSON dump; recorded in every output file.
std::uint64_t config_hash(const nlohmann::json& j);
std::string config_hash_hex(const ExperimentConfig& cfg);

}  // namespace crowdsim
