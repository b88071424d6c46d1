#include "crowdsim/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace crowdsim {
namespace {

template <typename E>
struct EnumNames {
  std::map<std::string, E> from;
  std::map<E, std::string> to;
  EnumNames(std::initializer_list<std::pair<const char*, E>> pairs) {
    for (const auto& [name, value] : pairs) {
      from[name] = value;
      to[value] = name;
    }
  }
};

const EnumNames<ScenarioKind> kScenarioNames{{"circle", ScenarioKind::circle},
                                             {"corridor", ScenarioKind::corridor},
                                             {"crossing", ScenarioKind::crossing},
                                             {"random", ScenarioKind::random}};
const EnumNames<SpawnMode> kSpawnNames{{"grid", SpawnMode::grid}, {"random", SpawnMode::random}};
const EnumNames<PerceptionMode> kModeNames{{"raycast", PerceptionMode::raycast},
                                           {"agent_perception", PerceptionMode::agent_perception},
                                           {"hybrid", PerceptionMode::hybrid}};
const EnumNames<ReferenceFrame> kFrameNames{{"absolute", ReferenceFrame::absolute},
                                            {"relative", ReferenceFrame::relative},
                                            {"egocentric", ReferenceFrame::egocentric}};
const EnumNames<DynamicsModel> kModelNames{
    {"cartesian_velocity", DynamicsModel::cartesian_velocity},
    {"cartesian_acceleration", DynamicsModel::cartesian_acceleration},
    {"polar_velocity", DynamicsModel::polar_velocity},
    {"polar_acceleration", DynamicsModel::polar_acceleration}};
const EnumNames<Activation> kActivationNames{{"tanh", Activation::tanh},
                                             {"relu", Activation::relu}};

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

// Tracks which keys a section consumed so leftovers can be reported.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("section '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      fail("bad value type for '" + path_ + "." + key + "'");
    }
  }

  template <typename E>
  void get_enum(const char* key, E& out, const EnumNames<E>& names, bool required = false) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) {
      if (required) fail("missing required key '" + path_ + "." + key + "'");
      return;
    }
    if (!it->is_string()) fail("'" + path_ + "." + key + "' must be a string");
    const auto found = names.from.find(it->get<std::string>());
    if (found == names.from.end())
      fail("unknown value '" + it->get<std::string>() + "' for '" + path_ + "." + key + "'");
    out = found->second;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail("unknown key '" + path_ + "." + key + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const nlohmann::json kEmptyObject = nlohmann::json::object();

const nlohmann::json& subsection(const nlohmann::json& j, const char* key,
                                 std::set<std::string>& seen) {
  seen.insert(key);
  const auto it = j.find(key);
  return it == j.end() ? kEmptyObject : *it;
}

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail("top level must be an object");
  ExperimentConfig cfg;
  std::set<std::string> seen;

  {
    const nlohmann::json& js = subsection(j, "scenario", seen);
    if (!js.contains("kind")) fail("missing required key 'scenario.kind'");
    Section s(js, "scenario");
    s.get_enum("kind", cfg.scenario.kind, kScenarioNames, true);
    s.get("n_agents", cfg.scenario.n_agents);
    s.get("circle_radius", cfg.scenario.circle_radius);
    s.get("corridor_width", cfg.scenario.corridor_width);
    s.get("corridor_length", cfg.scenario.corridor_length);
    s.get_enum("spawn_mode", cfg.scenario.spawn_mode, kSpawnNames);
    s.get("position_noise", cfg.scenario.position_noise);
    s.get("n_obstacles", cfg.scenario.n_obstacles);
    s.get("seed", cfg.scenario.seed);
    s.get("t_max", cfg.scenario.t_max);
    s.get("goal_radius", cfg.scenario.goal_radius);
    s.finish();
  }
  {
    Section s(subsection(j, "perception", seen), "perception");
    s.get_enum("mode", cfg.perception.mode, kModeNames);
    s.get_enum("frame", cfg.perception.frame, kFrameNames);
    s.get("n_rays", cfg.perception.n_rays);
    s.get("ray_range", cfg.perception.ray_range);
    s.get("k_neighbors", cfg.perception.k_neighbors);
    s.get("frame_stack", cfg.perception.frame_stack);
    s.finish();
  }
  {
    Section s(subsection(j, "dynamics", seen), "dynamics");
    s.get_enum("model", cfg.dynamics.model, kModelNames);
    s.get("v_max", cfg.dynamics.v_max);
    s.get("a_max", cfg.dynamics.a_max);
    s.get("omega_max", cfg.dynamics.omega_max);
    s.get("decision_dt", cfg.dynamics.decision_dt);
    s.get("physics_substeps", cfg.dynamics.physics_substeps);
    s.finish();
    cfg.dynamics.lambda = cfg.dynamics.a_max / cfg.dynamics.v_max;
  }
  {
    Section s(subsection(j, "reward", seen), "reward");
    s.get("c_g", cfg.reward.c_g);
    s.get("c_p", cfg.reward.c_p);
    s.get("c_v", cfg.reward.c_v);
    s.get("c_e", cfg.reward.c_e);
    s.get("c_c", cfg.reward.c_c);
    s.get("c_t", cfg.reward.c_t);
    s.get("v_0", cfg.reward.v_0);
    s.get("gamma", cfg.reward.gamma);
    s.finish();
  }
  {
    Section s(subsection(j, "ppo", seen), "ppo");
    s.get("gamma", cfg.ppo.gamma);
    s.get("gae_lambda", cfg.ppo.gae_lambda);
    s.get("clip_eps", cfg.ppo.clip_eps);
    s.get("epochs", cfg.ppo.epochs);
    s.get("minibatch_size", cfg.ppo.minibatch_size);
    s.get("learning_rate", cfg.ppo.learning_rate);
    s.get("entropy_coef", cfg.ppo.entropy_coef);
    s.get("value_coef", cfg.ppo.value_coef);
    s.get("max_grad_norm", cfg.ppo.max_grad_norm);
    s.get("steps_per_iteration", cfg.ppo.steps_per_iteration);
    s.get("n_parallel_worlds", cfg.ppo.n_parallel_worlds);
    s.get("seed", cfg.ppo.seed);
    s.get("trunk_widths", cfg.ppo.trunk.widths);
    s.get("psi_widths", cfg.ppo.psi.widths);
    s.get("phi_widths", cfg.ppo.phi.widths);
    Activation act = Activation::tanh;
    s.get_enum("activation", act, kActivationNames);
    cfg.ppo.trunk.activation = cfg.ppo.psi.activation = cfg.ppo.phi.activation = act;
    s.finish();
  }

  seen.insert("n_iterations");
  seen.insert("n_seeds");
  seen.insert("output_dir");
  if (j.contains("n_iterations")) cfg.n_iterations = j.at("n_iterations").get<int>();
  if (j.contains("n_seeds")) cfg.n_seeds = j.at("n_seeds").get<int>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  for (const auto& [key, value] : j.items()) {
    if (!seen.count(key)) fail("unknown key '" + key + "'");
  }

  validate(cfg);
  return cfg;
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["scenario"] = {{"kind", kScenarioNames.to.at(cfg.scenario.kind)},
                   {"n_agents", cfg.scenario.n_agents},
                   {"circle_radius", cfg.scenario.circle_radius},
                   {"corridor_width", cfg.scenario.corridor_width},
                   {"corridor_length", cfg.scenario.corridor_length},
                   {"spawn_mode", kSpawnNames.to.at(cfg.scenario.spawn_mode)},
                   {"position_noise", cfg.scenario.position_noise},
                   {"n_obstacles", cfg.scenario.n_obstacles},
                   {"seed", cfg.scenario.seed},
                   {"t_max", cfg.scenario.t_max},
                   {"goal_radius", cfg.scenario.goal_radius}};
  j["perception"] = {{"mode", kModeNames.to.at(cfg.perception.mode)},
                     {"frame", kFrameNames.to.at(cfg.perception.frame)},
                     {"n_rays", cfg.perception.n_rays},
                     {"ray_range", cfg.perception.ray_range},
                     {"k_neighbors", cfg.perception.k_neighbors},
                     {"frame_stack", cfg.perception.frame_stack}};
  j["dynamics"] = {{"model", kModelNames.to.at(cfg.dynamics.model)},
                   {"v_max", cfg.dynamics.v_max},
                   {"a_max", cfg.dynamics.a_max},
                   {"omega_max", cfg.dynamics.omega_max},
                   {"decision_dt", cfg.dynamics.decision_dt},
                   {"physics_substeps", cfg.dynamics.physics_substeps}};
  j["reward"] = {{"c_g", cfg.reward.c_g}, {"c_p", cfg.reward.c_p}, {"c_v", cfg.reward.c_v},
                 {"c_e", cfg.reward.c_e}, {"c_c", cfg.reward.c_c}, {"c_t", cfg.reward.c_t},
                 {"v_0", cfg.reward.v_0}, {"gamma", cfg.reward.gamma}};
  j["ppo"] = {{"gamma", cfg.ppo.gamma},
              {"gae_lambda", cfg.ppo.gae_lambda},
              {"clip_eps", cfg.ppo.clip_eps},
              {"epochs", cfg.ppo.epochs},
              {"minibatch_size", cfg.ppo.minibatch_size},
              {"learning_rate", cfg.ppo.learning_rate},
              {"entropy_coef", cfg.ppo.entropy_coef},
              {"value_coef", cfg.ppo.value_coef},
              {"max_grad_norm", cfg.ppo.max_grad_norm},
              {"steps_per_iteration", cfg.ppo.steps_per_iteration},
              {"n_parallel_worlds", cfg.ppo.n_parallel_worlds},
              {"seed", cfg.ppo.seed},
              {"trunk_widths", cfg.ppo.trunk.widths},
              {"psi_widths", cfg.ppo.psi.widths},
              {"phi_widths", cfg.ppo.phi.widths},
              {"activation", kActivationNames.to.at(cfg.ppo.trunk.activation)}};
  j["n_iterations"] = cfg.n_iterations;
  j["n_seeds"] = cfg.n_seeds;
  j["output_dir"] = cfg.output_dir;
  return j;
}

void apply_override(nlohmann::json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail("override '" + assignment + "' must be key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value_str = assignment.substr(eq + 1);

  nlohmann::json* node = &root;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) fail("override path '" + path + "' has an empty component");
    parts.push_back(part);
  }
  if (parts.empty()) fail("override '" + assignment + "' has no key path");
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) fail("override path '" + path + "' passes through a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = nlohmann::json::object();
  }
  nlohmann::json value = nlohmann::json::parse(value_str, nullptr, false);
  if (value.is_discarded()) value = value_str;  // bare strings
  (*node)[parts.back()] = std::move(value);
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail("parse error in '" + path + "': " + e.what());
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return experiment_from_json(j);
}

void validate(const ExperimentConfig& cfg) {
  auto check = [](bool ok, const char* msg) {
    if (!ok) fail(msg);
  };
  check(cfg.scenario.n_agents >= 1, "scenario.n_agents must be >= 1");
  check(cfg.scenario.t_max >= 1, "scenario.t_max must be >= 1");
  check(cfg.scenario.goal_radius > 0.0, "scenario.goal_radius must be positive");
  check(cfg.perception.n_rays >= 3, "perception.n_rays must be >= 3");
  check(cfg.perception.ray_range > 0.0, "perception.ray_range must be positive");
  check(cfg.perception.k_neighbors >= 1, "perception.k_neighbors must be >= 1");
  check(cfg.perception.frame_stack == 1 || cfg.perception.frame_stack == 2,
        "perception.frame_stack must be 1 or 2");
  check(cfg.dynamics.v_max > 0.0 && cfg.dynamics.a_max > 0.0,
        "dynamics.v_max and a_max must be positive");
  check(std::abs(cfg.dynamics.lambda - cfg.dynamics.a_max / cfg.dynamics.v_max) < 1e-12,
        "dynamics.lambda must equal a_max / v_max");
  check(cfg.dynamics.physics_substeps >= 1, "dynamics.physics_substeps must be >= 1");
  check(cfg.dynamics.decision_dt > 0.0, "dynamics.decision_dt must be positive");
  check(cfg.reward.c_e > 0.0, "reward.c_e must be positive");
  check(cfg.reward.v_0 > 0.0, "reward.v_0 must be positive");
  check(cfg.reward.gamma > 0.0 && cfg.reward.gamma <= 1.0, "reward.gamma must be in (0, 1]");
  check(cfg.ppo.gamma > 0.0 && cfg.ppo.gamma <= 1.0, "ppo.gamma must be in (0, 1]");
  check(cfg.ppo.gae_lambda >= 0.0 && cfg.ppo.gae_lambda <= 1.0,
        "ppo.gae_lambda must be in [0, 1]");
  check(cfg.ppo.clip_eps > 0.0, "ppo.clip_eps must be positive");
  check(cfg.ppo.epochs >= 1 && cfg.ppo.minibatch_size >= 1, "ppo.epochs/minibatch invalid");
  check(cfg.ppo.steps_per_iteration >= 1, "ppo.steps_per_iteration must be >= 1");
  check(cfg.ppo.n_parallel_worlds >= 1, "ppo.n_parallel_worlds must be >= 1");
  for (const MlpSpec* spec : {&cfg.ppo.trunk, &cfg.ppo.psi, &cfg.ppo.phi}) {
    check(!spec->widths.empty() && spec->widths.size() <= 6, "network depth must be 1-6 layers");
    for (int w : spec->widths) check(w >= 32 && w <= 128, "layer widths must be in [32, 128]");
  }
  check(cfg.n_iterations >= 0, "n_iterations must be >= 0");
  check(cfg.n_seeds >= 1, "n_seeds must be >= 1");
}

std::uint64_t config_hash(const nlohmann::json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(experiment_to_json(cfg))));
  return buf;
}

}  // namespace crowdsim
