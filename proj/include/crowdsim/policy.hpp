#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crowdsim/perception.hpp"

namespace crowdsim {

enum class Activation { tanh, relu };

struct MlpSpec {
  std::vector<int> widths{64, 64};
  Activation activation = Activation::tanh;
};

struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

struct DenseLayer {
  Matrix w;               // out x in
  std::vector<double> b;  // out
};

// Stack of dense layers, every one followed by the activation.
struct Mlp {
  std::vector<DenseLayer> layers;
  Activation act = Activation::tanh;

  int input_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().w.rows; }
};

// Input layout derived from the perception config. Streams that a mode does
// not produce are omitted from the network entirely.
struct ArchitectureSpec {
  int ray_dim = 0;             // n_rays * frame_stack, 0 when rays absent
  bool has_neighbors = false;
  MlpSpec trunk{{64, 64}};
  MlpSpec psi{{64}};
  MlpSpec phi{{64}};

  int main_input_dim() const { return kProprioDim + ray_dim; }
  int neighbor_input_dim() const { return 5; }
};

ArchitectureSpec make_arch(const PerceptionConfig& cfg, MlpSpec trunk = {{64, 64}},
                           MlpSpec psi = {{64}}, MlpSpec phi = {{64}});

// All trainable weights: policy and value networks are structurally
// identical twins (trunk over proprio+rays, Deep-Sets psi/phi over
// neighbors, linear heads), plus the state-independent log stddev.
struct PolicyParams {
  ArchitectureSpec arch;
  Mlp trunk, psi, phi;
  DenseLayer action_head;  // 2 x concat
  std::array<double, 2> log_std{0.0, 0.0};
  Mlp value_trunk, value_psi, value_phi;
  DenseLayer value_head;   // 1 x concat
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

PolicyParams init_policy(const ArchitectureSpec& arch, std::uint64_t seed);
PolicyParams zeros_like(const PolicyParams& p);

// Visits every parameter tensor in a fixed order.
using ParamVisitor = std::function<void(const std::string& name, double* values, size_t count)>;
void visit_params(PolicyParams& p, const ParamVisitor& fn);
size_t param_count(const PolicyParams& p);
std::vector<double*> param_refs(PolicyParams& p);

struct PolicyOutput {
  Vec2 action_mean;
  Vec2 action_std;
  double value = 0.0;
};

// phi(sum_i psi(x_i)); the empty set maps to phi(0). Inputs are raw feature
// vectors of arch.neighbor_input_dim() each.
std::vector<double> embed_neighbors(const PolicyParams& p,
                                    const std::vector<std::vector<double>>& neighbor_inputs);

// Full policy + value evaluation. Throws std::invalid_argument when the
// observation layout does not match the architecture.
PolicyOutput forward(const PolicyParams& p, const Observation& obs);

// Diagonal-Gaussian log density at `action` and the (state-independent)
// entropy of the distribution.
struct LogProbEntropy {
  double log_prob;
  double entropy;
};
LogProbEntropy log_prob_and_entropy(const PolicyOutput& out, Vec2 action);

// Clipped-surrogate PPO loss pieces.
struct PpoLossSpec {
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
};

struct PpoSample {
  const Observation* obs = nullptr;
  Vec2 action;             // pre-clamp sample the log-prob was taken at
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double value_target = 0.0;
};

struct PpoBatchStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

// Mean PPO loss over the batch (no gradients); the finite-difference oracle
// in the tests drives this.
double ppo_loss(const PolicyParams& p, std::span<const PpoSample> batch,
                const PpoLossSpec& spec);

// Exact reverse-mode gradients of the mean batch loss, accumulated into
// `grads` (same structure as params; caller zeroes). Throws on a non-finite
// loss.
PpoBatchStats ppo_backward(const PolicyParams& p, std::span<const PpoSample> batch,
                           const PpoLossSpec& spec, PolicyParams& grads);

// Checkpoint I/O: a JSON map of named tensors plus the architecture.
void save_policy(const PolicyParams& p, const std::string& path);
PolicyParams load_policy(const std::string& path);

}  // namespace crowdsim
