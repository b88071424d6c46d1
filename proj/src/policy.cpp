#include "crowdsim/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace crowdsim {
namespace {

constexpr double kPositionScale = 10.0;  // m, scene half-size
constexpr double kVelocityScale = 2.0;   // m/s, v_max
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

double activate(Activation act, double x) {
  return act == Activation::tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

double activate_grad_from_post(Activation act, double post) {
  return act == Activation::tanh ? 1.0 - post * post : (post > 0.0 ? 1.0 : 0.0);
}

struct MlpCache {
  std::vector<double> input;
  std::vector<std::vector<double>> post;
};

std::vector<double> mlp_forward(const Mlp& m, std::vector<double> in, MlpCache* cache) {
  if (cache) {
    cache->input = in;
    cache->post.clear();
  }
  std::vector<double> cur = std::move(in);
  for (const DenseLayer& layer : m.layers) {
    std::vector<double> next(layer.w.rows);
    for (int r = 0; r < layer.w.rows; ++r) {
      double acc = layer.b[r];
      for (int c = 0; c < layer.w.cols; ++c) acc += layer.w(r, c) * cur[c];
      next[r] = activate(m.act, acc);
    }
    if (cache) cache->post.push_back(next);
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> mlp_backward(const Mlp& m, const MlpCache& cache,
                                 std::vector<double> dout, Mlp& grad) {
  for (int l = static_cast<int>(m.layers.size()) - 1; l >= 0; --l) {
    const DenseLayer& layer = m.layers[l];
    DenseLayer& glayer = grad.layers[l];
    const std::vector<double>& post = cache.post[l];
    const std::vector<double>& in = l > 0 ? cache.post[l - 1] : cache.input;
    std::vector<double> din(layer.w.cols, 0.0);
    for (int r = 0; r < layer.w.rows; ++r) {
      const double dpre = dout[r] * activate_grad_from_post(m.act, post[r]);
      glayer.b[r] += dpre;
      for (int c = 0; c < layer.w.cols; ++c) {
        glayer.w(r, c) += dpre * in[c];
        din[c] += layer.w(r, c) * dpre;
      }
    }
    dout = std::move(din);
  }
  return dout;
}

std::vector<double> linear_forward(const DenseLayer& head, const std::vector<double>& in) {
  std::vector<double> out(head.w.rows);
  for (int r = 0; r < head.w.rows; ++r) {
    double acc = head.b[r];
    for (int c = 0; c < head.w.cols; ++c) acc += head.w(r, c) * in[c];
    out[r] = acc;
  }
  return out;
}

std::vector<double> linear_backward(const DenseLayer& head, const std::vector<double>& in,
                                    const std::vector<double>& dout, DenseLayer& grad) {
  std::vector<double> din(head.w.cols, 0.0);
  for (int r = 0; r < head.w.rows; ++r) {
    grad.b[r] += dout[r];
    for (int c = 0; c < head.w.cols; ++c) {
      grad.w(r, c) += dout[r] * in[c];
      din[c] += head.w(r, c) * dout[r];
    }
  }
  return din;
}

std::vector<double> normalized_main_input(const ArchitectureSpec& arch, const Observation& obs) {
  if (static_cast<int>(obs.proprio.size()) != kProprioDim)
    throw std::invalid_argument("forward: proprio size mismatch");
  std::vector<double> in;
  in.reserve(arch.main_input_dim());
  in.push_back(obs.proprio[0] / kPositionScale);
  in.push_back(obs.proprio[1] / kPositionScale);
  in.push_back(obs.proprio[2] / kPositionScale);
  in.push_back(obs.proprio[3] / kPositionScale);
  in.push_back(obs.proprio[4]);
  in.push_back(obs.proprio[5]);
  in.push_back(obs.proprio[6] / kVelocityScale);
  in.push_back(obs.proprio[7] / kVelocityScale);
  if (arch.ray_dim > 0) {
    if (!obs.rays || static_cast<int>(obs.rays->size()) != arch.ray_dim)
      throw std::invalid_argument("forward: observation ray block does not match architecture");
    in.insert(in.end(), obs.rays->begin(), obs.rays->end());
  } else if (obs.rays && !obs.rays->empty()) {
    throw std::invalid_argument("forward: architecture has no ray input");
  }
  return in;
}

std::vector<std::vector<double>> normalized_neighbor_inputs(const ArchitectureSpec& arch,
                                                            const Observation& obs) {
  if (!arch.has_neighbors) {
    if (!obs.neighbors.empty())
      throw std::invalid_argument("forward: architecture has no neighbor input");
    return {};
  }
  std::vector<std::vector<double>> ins;
  ins.reserve(obs.neighbors.size());
  for (const NeighborFeature& f : obs.neighbors) {
    ins.push_back({f[0] / kPositionScale, f[1] / kPositionScale, f[2] / kVelocityScale,
                   f[3] / kVelocityScale, f[4] / kPositionScale});
  }
  return ins;
}

struct NetRefs {
  const Mlp& trunk;
  const Mlp& psi;
  const Mlp& phi;
  const DenseLayer& head;
};

struct NetCache {
  MlpCache trunk;
  std::vector<MlpCache> psi;
  MlpCache phi;
  std::vector<double> concat;
};

std::vector<double> net_forward(const NetRefs& net, bool has_neighbors,
                                const std::vector<double>& main_in,
                                const std::vector<std::vector<double>>& neighbor_ins,
                                NetCache* cache) {
  std::vector<double> concat = mlp_forward(net.trunk, main_in, cache ? &cache->trunk : nullptr);
  if (has_neighbors) {
    std::vector<double> sum(net.psi.output_dim(), 0.0);
    if (cache) cache->psi.resize(neighbor_ins.size());
    for (size_t i = 0; i < neighbor_ins.size(); ++i) {
      std::vector<double> e =
          mlp_forward(net.psi, neighbor_ins[i], cache ? &cache->psi[i] : nullptr);
      for (size_t k = 0; k < sum.size(); ++k) sum[k] += e[k];
    }
    std::vector<double> embed = mlp_forward(net.phi, std::move(sum), cache ? &cache->phi : nullptr);
    concat.insert(concat.end(), embed.begin(), embed.end());
  }
  if (cache) cache->concat = concat;
  return linear_forward(net.head, concat);
}

struct NetGrads {
  Mlp* trunk;
  Mlp* psi;
  Mlp* phi;
  DenseLayer* head;
};

void net_backward(const NetRefs& net, bool has_neighbors, const NetCache& cache,
                  const std::vector<double>& dhead, NetGrads grads) {
  std::vector<double> dconcat = linear_backward(net.head, cache.concat, dhead, *grads.head);
  const int trunk_out = net.trunk.output_dim();
  std::vector<double> dtrunk(dconcat.begin(), dconcat.begin() + trunk_out);
  if (has_neighbors) {
    std::vector<double> dembed(dconcat.begin() + trunk_out, dconcat.end());
    std::vector<double> dsum = mlp_backward(net.phi, cache.phi, std::move(dembed), *grads.phi);
    for (const MlpCache& pc : cache.psi) mlp_backward(net.psi, pc, dsum, *grads.psi);
  }
  mlp_backward(net.trunk, cache.trunk, std::move(dtrunk), *grads.trunk);
}

Mlp make_mlp(const MlpSpec& spec, int input_dim) {
  Mlp m;
  m.act = spec.activation;
  int in = input_dim;
  for (int w : spec.widths) {
    DenseLayer layer;
    layer.w = Matrix(w, in);
    layer.b.assign(w, 0.0);
    m.layers.push_back(std::move(layer));
    in = w;
  }
  return m;
}

DenseLayer make_head(int out, int in) {
  DenseLayer h;
  h.w = Matrix(out, in);
  h.b.assign(out, 0.0);
  return h;
}

PolicyParams make_shell(const ArchitectureSpec& arch) {
  PolicyParams p;
  p.arch = arch;
  p.trunk = make_mlp(arch.trunk, arch.main_input_dim());
  p.value_trunk = make_mlp(arch.trunk, arch.main_input_dim());
  int concat = p.trunk.output_dim();
  if (arch.has_neighbors) {
    p.psi = make_mlp(arch.psi, arch.neighbor_input_dim());
    p.phi = make_mlp(arch.phi, p.psi.output_dim());
    p.value_psi = make_mlp(arch.psi, arch.neighbor_input_dim());
    p.value_phi = make_mlp(arch.phi, p.value_psi.output_dim());
    concat += p.phi.output_dim();
  }
  p.action_head = make_head(2, concat);
  p.value_head = make_head(1, concat);
  return p;
}

// Orthogonal-style rows: Gram-Schmidt over gaussian draws, scaled by gain.
void init_layer(DenseLayer& layer, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int rows = layer.w.rows, cols = layer.w.cols;
  for (int r = 0; r < rows; ++r) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      for (int c = 0; c < cols; ++c) layer.w(r, c) = normal(rng);
      for (int q = std::max(0, r - cols + 1); q < r; ++q) {
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += layer.w(r, c) * layer.w(q, c);
        for (int c = 0; c < cols; ++c) layer.w(r, c) -= dot * layer.w(q, c);
      }
      double norm = 0.0;
      for (int c = 0; c < cols; ++c) norm += layer.w(r, c) * layer.w(r, c);
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (int c = 0; c < cols; ++c) layer.w(r, c) /= norm;
        break;
      }
    }
  }
  for (auto& v : layer.w.data) v *= gain;
  for (auto& v : layer.b) v = 0.0;
}

void init_mlp(Mlp& m, std::mt19937_64& rng) {
  const double gain = m.act == Activation::relu ? std::sqrt(2.0) : 1.0;
  for (DenseLayer& layer : m.layers) init_layer(layer, gain, rng);
}

void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite ") + what);
}

}  // namespace

ArchitectureSpec make_arch(const PerceptionConfig& cfg, MlpSpec trunk, MlpSpec psi, MlpSpec phi) {
  ArchitectureSpec arch;
  const bool rays =
      cfg.mode == PerceptionMode::raycast || cfg.mode == PerceptionMode::hybrid;
  arch.ray_dim = rays ? cfg.n_rays * cfg.frame_stack : 0;
  arch.has_neighbors =
      cfg.mode == PerceptionMode::agent_perception || cfg.mode == PerceptionMode::hybrid;
  arch.trunk = std::move(trunk);
  arch.psi = std::move(psi);
  arch.phi = std::move(phi);
  return arch;
}

PolicyParams init_policy(const ArchitectureSpec& arch, std::uint64_t seed) {
  PolicyParams p = make_shell(arch);
  std::mt19937_64 rng(seed);
  init_mlp(p.trunk, rng);
  if (arch.has_neighbors) {
    init_mlp(p.psi, rng);
    init_mlp(p.phi, rng);
  }
  init_layer(p.action_head, 0.01, rng);
  p.log_std = {0.0, 0.0};
  init_mlp(p.value_trunk, rng);
  if (arch.has_neighbors) {
    init_mlp(p.value_psi, rng);
    init_mlp(p.value_phi, rng);
  }
  init_layer(p.value_head, 1.0, rng);
  return p;
}

PolicyParams zeros_like(const PolicyParams& p) {
  PolicyParams z = make_shell(p.arch);
  z.log_std = {0.0, 0.0};
  return z;
}

void visit_params(PolicyParams& p, const ParamVisitor& fn) {
  auto visit_mlp = [&fn](const std::string& prefix, Mlp& m) {
    for (size_t l = 0; l < m.layers.size(); ++l) {
      const std::string base = prefix + "." + std::to_string(l);
      fn(base + ".w", m.layers[l].w.data.data(), m.layers[l].w.data.size());
      fn(base + ".b", m.layers[l].b.data(), m.layers[l].b.size());
    }
  };
  visit_mlp("trunk", p.trunk);
  visit_mlp("psi", p.psi);
  visit_mlp("phi", p.phi);
  fn("action_head.w", p.action_head.w.data.data(), p.action_head.w.data.size());
  fn("action_head.b", p.action_head.b.data(), p.action_head.b.size());
  fn("log_std", p.log_std.data(), p.log_std.size());
  visit_mlp("value_trunk", p.value_trunk);
  visit_mlp("value_psi", p.value_psi);
  visit_mlp("value_phi", p.value_phi);
  fn("value_head.w", p.value_head.w.data.data(), p.value_head.w.data.size());
  fn("value_head.b", p.value_head.b.data(), p.value_head.b.size());
}

size_t param_count(const PolicyParams& p) {
  size_t n = 0;
  visit_params(const_cast<PolicyParams&>(p),
               [&n](const std::string&, double*, size_t count) { n += count; });
  return n;
}

std::vector<double*> param_refs(PolicyParams& p) {
  std::vector<double*> refs;
  refs.reserve(param_count(p));
  visit_params(p, [&refs](const std::string&, double* values, size_t count) {
    for (size_t i = 0; i < count; ++i) refs.push_back(values + i);
  });
  return refs;
}

std::vector<double> embed_neighbors(const PolicyParams& p,
                                    const std::vector<std::vector<double>>& neighbor_inputs) {
  if (!p.arch.has_neighbors)
    throw std::invalid_argument("embed_neighbors: architecture has no neighbor stream");
  std::vector<double> sum(p.psi.output_dim(), 0.0);
  for (const auto& x : neighbor_inputs) {
    if (static_cast<int>(x.size()) != p.psi.input_dim())
      throw std::invalid_argument("embed_neighbors: feature width mismatch");
    const std::vector<double> e = mlp_forward(p.psi, x, nullptr);
    for (size_t k = 0; k < sum.size(); ++k) sum[k] += e[k];
  }
  return mlp_forward(p.phi, std::move(sum), nullptr);
}

PolicyOutput forward(const PolicyParams& p, const Observation& obs) {
  const std::vector<double> main_in = normalized_main_input(p.arch, obs);
  const std::vector<std::vector<double>> neigh = normalized_neighbor_inputs(p.arch, obs);
  const std::vector<double> mean = net_forward(
      {p.trunk, p.psi, p.phi, p.action_head}, p.arch.has_neighbors, main_in, neigh, nullptr);
  const std::vector<double> value =
      net_forward({p.value_trunk, p.value_psi, p.value_phi, p.value_head},
                  p.arch.has_neighbors, main_in, neigh, nullptr);
  PolicyOutput out;
  out.action_mean = {mean[0], mean[1]};
  out.action_std = {std::exp(p.log_std[0]), std::exp(p.log_std[1])};
  out.value = value[0];
  return out;
}

LogProbEntropy log_prob_and_entropy(const PolicyOutput& out, Vec2 action) {
  const double dx = (action.x - out.action_mean.x) / out.action_std.x;
  const double dy = (action.y - out.action_mean.y) / out.action_std.y;
  const double log_prob = -0.5 * (dx * dx + dy * dy) - std::log(out.action_std.x) -
                          std::log(out.action_std.y) - 2.0 * kHalfLog2Pi;
  const double entropy = 2.0 * (kHalfLog2Pi + 0.5) + std::log(out.action_std.x) +
                         std::log(out.action_std.y);
  return {log_prob, entropy};
}

namespace {

struct SampleLoss {
  double loss = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  bool clipped = false;
  double kl = 0.0;
  // backward seeds
  double dmean[2] = {0.0, 0.0};
  double dlogstd[2] = {0.0, 0.0};
  double dvalue = 0.0;
};

SampleLoss sample_loss(const PolicyParams& p, const PpoSample& s, const PpoLossSpec& spec,
                       const std::vector<double>& mean, double value) {
  SampleLoss out;
  const double std_x = std::exp(p.log_std[0]);
  const double std_y = std::exp(p.log_std[1]);
  const double zx = (s.action.x - mean[0]) / std_x;
  const double zy = (s.action.y - mean[1]) / std_y;
  const double log_prob =
      -0.5 * (zx * zx + zy * zy) - p.log_std[0] - p.log_std[1] - 2.0 * kHalfLog2Pi;
  const double ratio = std::exp(log_prob - s.old_log_prob);
  const double clipped_ratio = std::clamp(ratio, 1.0 - spec.clip_eps, 1.0 + spec.clip_eps);
  const double surr1 = ratio * s.advantage;
  const double surr2 = clipped_ratio * s.advantage;
  out.policy = -std::min(surr1, surr2);
  out.clipped = std::abs(ratio - 1.0) > spec.clip_eps;
  const double vdiff = value - s.value_target;
  out.value = vdiff * vdiff;
  out.entropy = 2.0 * (kHalfLog2Pi + 0.5) + p.log_std[0] + p.log_std[1];
  out.loss = out.policy + spec.value_coef * out.value - spec.entropy_coef * out.entropy;
  out.kl = (ratio - 1.0) - (log_prob - s.old_log_prob);

  // d(-min(surr1, surr2))/dlog_prob: the clipped branch is constant in the
  // parameters wherever it is the active minimum.
  const double dlogp = surr1 <= surr2 ? -s.advantage * ratio : 0.0;
  out.dmean[0] = dlogp * zx / std_x;
  out.dmean[1] = dlogp * zy / std_y;
  out.dlogstd[0] = dlogp * (zx * zx - 1.0) - spec.entropy_coef;
  out.dlogstd[1] = dlogp * (zy * zy - 1.0) - spec.entropy_coef;
  out.dvalue = 2.0 * vdiff * spec.value_coef;
  return out;
}

}  // namespace

double ppo_loss(const PolicyParams& p, std::span<const PpoSample> batch, const PpoLossSpec& spec) {
  if (batch.empty()) throw std::invalid_argument("ppo_loss: empty batch");
  double total = 0.0;
  for (const PpoSample& s : batch) {
    const std::vector<double> main_in = normalized_main_input(p.arch, *s.obs);
    const std::vector<std::vector<double>> neigh = normalized_neighbor_inputs(p.arch, *s.obs);
    const std::vector<double> mean = net_forward(
        {p.trunk, p.psi, p.phi, p.action_head}, p.arch.has_neighbors, main_in, neigh, nullptr);
    const std::vector<double> value =
        net_forward({p.value_trunk, p.value_psi, p.value_phi, p.value_head},
                    p.arch.has_neighbors, main_in, neigh, nullptr);
    total += sample_loss(p, s, spec, mean, value[0]).loss;
  }
  return total / batch.size();
}

PpoBatchStats ppo_backward(const PolicyParams& p, std::span<const PpoSample> batch,
                           const PpoLossSpec& spec, PolicyParams& grads) {
  if (batch.empty()) throw std::invalid_argument("ppo_backward: empty batch");
  PpoBatchStats stats;
  const double inv_n = 1.0 / batch.size();
  for (const PpoSample& s : batch) {
    const std::vector<double> main_in = normalized_main_input(p.arch, *s.obs);
    const std::vector<std::vector<double>> neigh = normalized_neighbor_inputs(p.arch, *s.obs);
    NetCache policy_cache, value_cache;
    const std::vector<double> mean =
        net_forward({p.trunk, p.psi, p.phi, p.action_head}, p.arch.has_neighbors, main_in,
                    neigh, &policy_cache);
    const std::vector<double> value =
        net_forward({p.value_trunk, p.value_psi, p.value_phi, p.value_head},
                    p.arch.has_neighbors, main_in, neigh, &value_cache);
    const SampleLoss sl = sample_loss(p, s, spec, mean, value[0]);
    check_finite(sl.loss, "PPO loss");

    stats.loss += sl.loss * inv_n;
    stats.policy_loss += sl.policy * inv_n;
    stats.value_loss += sl.value * inv_n;
    stats.entropy += sl.entropy * inv_n;
    stats.clip_fraction += (sl.clipped ? 1.0 : 0.0) * inv_n;
    stats.approx_kl += sl.kl * inv_n;

    net_backward({p.trunk, p.psi, p.phi, p.action_head}, p.arch.has_neighbors, policy_cache,
                 {sl.dmean[0] * inv_n, sl.dmean[1] * inv_n},
                 {&grads.trunk, &grads.psi, &grads.phi, &grads.action_head});
    net_backward({p.value_trunk, p.value_psi, p.value_phi, p.value_head},
                 p.arch.has_neighbors, value_cache, {sl.dvalue * inv_n},
                 {&grads.value_trunk, &grads.value_psi, &grads.value_phi, &grads.value_head});
    grads.log_std[0] += sl.dlogstd[0] * inv_n;
    grads.log_std[1] += sl.dlogstd[1] * inv_n;
  }
  return stats;
}

void save_policy(const PolicyParams& p, const std::string& path) {
  nlohmann::json j;
  j["format"] = "crowdsim-policy-v1";
  j["arch"] = {
      {"ray_dim", p.arch.ray_dim},
      {"has_neighbors", p.arch.has_neighbors},
      {"trunk_widths", p.arch.trunk.widths},
      {"psi_widths", p.arch.psi.widths},
      {"phi_widths", p.arch.phi.widths},
      {"activation", p.arch.trunk.activation == Activation::tanh ? "tanh" : "relu"},
  };
  nlohmann::json tensors = nlohmann::json::object();
  visit_params(const_cast<PolicyParams&>(p),
               [&tensors](const std::string& name, double* values, size_t count) {
                 tensors[name] = std::vector<double>(values, values + count);
               });
  j["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_policy: cannot open " + path);
  out << j.dump();
}

PolicyParams load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_policy: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "crowdsim-policy-v1")
    throw std::runtime_error("load_policy: unrecognized checkpoint format");
  ArchitectureSpec arch;
  const auto& a = j.at("arch");
  arch.ray_dim = a.at("ray_dim").get<int>();
  arch.has_neighbors = a.at("has_neighbors").get<bool>();
  const Activation act =
      a.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::tanh;
  arch.trunk = {a.at("trunk_widths").get<std::vector<int>>(), act};
  arch.psi = {a.at("psi_widths").get<std::vector<int>>(), act};
  arch.phi = {a.at("phi_widths").get<std::vector<int>>(), act};

  PolicyParams p = make_shell(arch);
  const auto& tensors = j.at("tensors");
  visit_params(p, [&tensors](const std::string& name, double* values, size_t count) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("load_policy: missing tensor " + name);
    const auto vec = it->get<std::vector<double>>();
    if (vec.size() != count) throw std::runtime_error("load_policy: shape mismatch for " + name);
    std::copy(vec.begin(), vec.end(), values);
  });
  return p;
}

}  // namespace crowdsim
