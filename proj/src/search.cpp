// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mfs/network.hpp"
#include "mfs/optim.hpp"

namespace mfs {
namespace {

std::string node_suffix(const NodeKey& n) {
  return ".r" + std::to_string(n.rate) + ".l" + std::to_string(n.layer);
}

std::vector<double> softmax_vec(const Tensor& logits) {
  std::vector<double> out(logits.size());
  double m = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += out[i] = std::exp(logits[i] - m);
  for (double& v : out) v /= z;
  return out;
}

// Lowest index among the maxima of v over indices where keep(i).
template <typename Keep>
int argmax_where(const std::vector<double>& v, Keep keep) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(v.size()); ++i) {
    if (keep(i) && (best < 0 || v[i] > v[best])) best = i;
  }
  return best;
}

int log2_ratio(int hi, int lo) {
  int n = 0;
  while (lo < hi) {
    lo *= 2;
    ++n;
  }
  return n;
}

// Cycles through a shuffled index list, reshuffling at each pass.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> pool, Rng& rng) : pool_(std::move(pool)), rng_(rng) {
    shuffle();
  }
  std::vector<std::size_t> next(int n) {
    std::vector<std::size_t> out;
    for (int i = 0; i < n; ++i) {
      if (pos_ == pool_.size()) shuffle();
      out.push_back(pool_[pos_++]);
    }
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = pool_.size(); i > 1; --i) {
      std::swap(pool_[i - 1], pool_[static_cast<std::size_t>(uniform_open(rng_) * i)]);
    }
    pos_ = 0;
  }
  std::vector<std::size_t> pool_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

}  // namespace

ArchParams::ArchParams(const SearchSpaceConfig& config) : config_(config) {
  config_.validate();
  for (int l = 0; l < config_.num_layers; ++l) {
    for (int rate : config_.rates) {
      if (l < config_.first_layer(rate)) continue;
      NodeKey n{rate, l};
      nodes_.push_back(n);
      logits_.add(alpha_name(n), Tensor({config_.ops.size()}));
      logits_.add(gamma_name(n), Tensor({config_.expansion_ratios.size()}));
      if (has_beta(rate, l)) logits_.add(beta_name(n), Tensor({2}));
    }
  }
}

bool ArchParams::has_node(int rate, int layer) const {
  return layer >= 0 && layer < config_.num_layers &&
         std::find(config_.rates.begin(), config_.rates.end(), rate) != config_.rates.end() &&
         layer >= config_.first_layer(rate);
}

bool ArchParams::has_beta(int rate, int layer) const {
  return has_node(rate, layer) && has_node(rate, layer - 1) && has_node(rate / 2, layer - 1);
}

std::string ArchParams::alpha_name(const NodeKey& n) { return "alpha" + node_suffix(n); }
std::string ArchParams::beta_name(const NodeKey& n) { return "beta" + node_suffix(n); }
std::string ArchParams::gamma_name(const NodeKey& n) { return "gamma" + node_suffix(n); }

double ArchProbs::stay_weight(int rate, int layer) const {
  const auto& b = nodes.at({rate, layer}).beta;
  return b.empty() ? 1.0 : b[1];
}

double ArchProbs::move_weight(int rate, int layer) const {
  const auto& b = nodes.at({rate, layer}).beta;
  return b.empty() ? 1.0 : b[0];
}

ArchProbs project_simplex(const ArchParams& params) {
  ArchProbs p;
  const auto& store = params.logits();
  for (const NodeKey& n : params.nodes()) {
    NodeProbs np;
    np.alpha = softmax_vec(store.get(ArchParams::alpha_name(n)).value);
    np.gamma = softmax_vec(store.get(ArchParams::gamma_name(n)).value);
    if (params.has_beta(n.rate, n.layer)) {
      np.beta = softmax_vec(store.get(ArchParams::beta_name(n)).value);
    }
    p.nodes.emplace(n, std::move(np));
  }
  return p;
}

double gumbel_noise(double u) { return -std::log(-std::log(u)); }

int gumbel_argmax(std::span<const double> gamma, std::span<const double> noise, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("gumbel temperature must be positive");
  if (gamma.size() != noise.size() || gamma.empty()) {
    throw std::invalid_argument("gumbel_argmax: gamma and noise sizes differ");
  }
  int best = 0;
  double best_v = -INFINITY;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const double v = (std::log(std::max(gamma[i], 1e-12)) + noise[i]) / tau;
    if (v > best_v) {
      best_v = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

int gumbel_sample(std::span<const double> gamma, double tau, Rng& rng) {
  std::vector<double> noise(gamma.size());
  for (double& o : noise) o = gumbel_noise(uniform_open(rng));
  return gumbel_argmax(gamma, noise, tau);
}

Expr gumbel_gate(const Expr& theta, std::span<const double> noise, double tau, int index) {
  const Tensor& t = theta.value();
  if (noise.size() != t.size()) throw std::invalid_argument("gumbel_gate: noise size mismatch");
  Tensor perturbed(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) perturbed[i] = (t[i] + noise[i]) / tau;
  std::vector<double> y = softmax_vec(perturbed);
  const auto j = static_cast<std::size_t>(index);
  return theta.graph()->record(
      Tensor::scalar(1.0), {theta},
      [y = std::move(y), j, tau](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
        if (!din[0]) return;
        Tensor& g = *din[0];
        for (std::size_t i = 0; i < y.size(); ++i) {
          g[i] += dout[0] * y[j] * ((i == j ? 1.0 : 0.0) - y[i]) / tau;
        }
      });
}

NetworkSpec derive_spec(const ArchParams& params, Role role) {
  const SearchSpaceConfig& cfg = params.config();
  const ArchProbs probs = project_simplex(params);
  const int last = cfg.num_layers - 1;
  const int cap = role == Role::kTeacher ? cfg.max_expansion() : cfg.student_max_expansion;

  auto make_layer = [&](int rate, int layer, int stride) {
    const NodeProbs& np = probs.nodes.at({rate, layer});
    LayerSpec l;
    l.rate = rate;
    l.stride = stride;
    l.op = cfg.ops[static_cast<std::size_t>(argmax_where(np.alpha, [](int) { return true; }))];
    if (role == Role::kTeacher) {
      l.expansion = cfg.max_expansion();
    } else {
      const int j = argmax_where(np.gamma, [&](int i) { return cfg.expansion_ratios[i] <= cap; });
      l.expansion = cfg.expansion_ratios[static_cast<std::size_t>(j)];
    }
    return l;
  };
  // Rate `r` entering layer `l` can still reach every target and finish
  // with a stride-1 layer.
  auto feasible = [&](int r, int l, const std::vector<int>& targets) {
    for (int t : targets) {
      if (r > t || log2_ratio(t, r) > last - l) return false;
    }
    return true;
  };
  auto choose_stride = [&](int rate, int layer, const std::vector<int>& targets) {
    if (layer == last) return 1;
    const bool can_stay = feasible(rate, layer + 1, targets);
    const bool can_move = rate * 2 <= cfg.rates.back() && feasible(rate * 2, layer + 1, targets);
    if (can_stay && can_move) {
      return probs.move_weight(rate * 2, layer + 1) > probs.stay_weight(rate, layer + 1) ? 2 : 1;
    }
    if (!can_stay && !can_move) throw std::logic_error("derive_spec: no feasible path");
    return can_move ? 2 : 1;
  };

  NetworkSpec spec;
  spec.role = role;
  spec.base_width = cfg.base_width;
  spec.cell_width = cfg.cell_width;
  spec.num_classes = cfg.num_classes;
  std::vector<int> targets;
  for (int b = 0; b < cfg.num_branches; ++b) targets.push_back(cfg.branch_rate(b));
  int rate = cfg.rates.front();
  for (int l = 0; l < cfg.trunk_layers; ++l) {
    const int stride = choose_stride(rate, l, targets);
    spec.layers.push_back(make_layer(rate, l, stride));
    rate *= stride;
  }
  for (int b = 0; b < cfg.num_branches; ++b) {
    BranchSpec br;
    br.output_rate = cfg.branch_rate(b);
    int r = rate;
    for (int l = cfg.trunk_layers; l < cfg.num_layers; ++l) {
      const int stride = choose_stride(r, l, {br.output_rate});
      br.layers.push_back(make_layer(r, l, stride));
      r *= stride;
    }
    spec.branches.push_back(std::move(br));
  }
  spec.validate();
  return spec;
}

SupernetOutput supernet_forward(Binder& weights, Binder& arch, const ArchParams& params,
                                const Expr& images, Rng& rng, double tau,
                                const LatencyTable* table, bool attention) {
  const SearchSpaceConfig& cfg = params.config();
  Graph& g = weights.graph();
  const int last = cfg.num_layers - 1;
  const int top = cfg.rates.back();

  // Marginal latency vectors per rate, indexed like α and γ.
  struct RateMarginals {
    Tensor op, expansion;
    double stride[2];
  };
  std::map<int, RateMarginals> marg;
  if (table) {
    for (int r : cfg.rates) {
      RateMarginals m{Tensor({cfg.ops.size()}), Tensor({cfg.expansion_ratios.size()}), {}};
      for (std::size_t k = 0; k < cfg.ops.size(); ++k) m.op[k] = table->op_marginal(cfg.ops[k], r);
      for (std::size_t j = 0; j < cfg.expansion_ratios.size(); ++j) {
        m.expansion[j] = table->expansion_marginal(cfg.expansion_ratios[j], r);
      }
      m.stride[0] = table->stride_marginal(1, r);
      m.stride[1] = table->stride_marginal(2, r);
      marg.emplace(r, std::move(m));
    }
  }

  std::map<NodeKey, Expr> out1, out2;  // stride-1 and stride-2 outputs
  std::map<NodeKey, Expr> beta;
  std::vector<Expr> latency_terms;
  const Expr stem = stem_forward(weights, images);

  auto edge_weight = [&](int rate, int layer, int which) -> Expr {
    auto it = beta.find({rate, layer});
    if (it == beta.end()) return Expr();
    return element(it->second, static_cast<std::size_t>(which));
  };

  for (const NodeKey& n : params.nodes()) {
    if (params.has_beta(n.rate, n.layer)) {
      beta[n] = softmax(arch(ArchParams::beta_name(n)), 0);
    }
  }

  for (const NodeKey& n : params.nodes()) {
    Expr x;
    if (n.layer == 0) {
      x = stem;
    } else if (params.has_beta(n.rate, n.layer)) {
      x = combine_inputs(out1.at({n.rate, n.layer - 1}), out2.at({n.rate / 2, n.layer - 1}),
                         beta.at(n));
    } else if (params.has_node(n.rate, n.layer - 1)) {
      x = out1.at({n.rate, n.layer - 1});
    } else {
      x = out2.at({n.rate / 2, n.layer - 1});
    }

    Expr alpha = softmax(arch(ArchParams::alpha_name(n)), 0);
    Expr theta = arch(ArchParams::gamma_name(n));
    std::vector<double> noise(cfg.expansion_ratios.size());
    for (double& o : noise) o = gumbel_noise(uniform_open(rng));
    const std::vector<double> gamma = softmax_vec(theta.value());
    const int j = gumbel_argmax(gamma, noise, tau);
    Expr gate = gumbel_gate(theta, noise, tau, j);
    const int expansion = cfg.expansion_ratios[static_cast<std::size_t>(j)];

    out1[n] = mixed_cell(weights, cfg, n.rate, n.layer, x, alpha, 1, expansion, gate);
    const bool has_down = n.rate < top && n.layer < last;
    if (has_down) {
      out2[n] = mixed_cell(weights, cfg, n.rate, n.layer, x, alpha, 2, expansion, gate);
    }

    if (table) {
      const RateMarginals& m = marg.at(n.rate);
      Expr soft_gamma = softmax(theta, 0);
      Expr shared = add(scale(dot(alpha, m.op), kLatencyWeights[0]),
                        scale(dot(soft_gamma, m.expansion), kLatencyWeights[2]));
      auto edge_term = [&](int stride, const Expr& e) {
        Expr term = add(shared, g.constant(Tensor::scalar(kLatencyWeights[1] *
                                                          m.stride[stride - 1])));
        latency_terms.push_back(e.valid() ? scale(term, e) : term);
      };
      // Stride-1 edge feeds (rate, layer+1) or, in the last layer, the head.
      if (n.layer == last) {
        if (n.rate != cfg.rates.front()) edge_term(1, Expr());
      } else {
        edge_term(1, edge_weight(n.rate, n.layer + 1, 1));
      }
      if (has_down) edge_term(2, edge_weight(n.rate * 2, n.layer + 1, 0));
    }
  }

  const Shape& s = images.shape();
  SupernetOutput r;
  r.logits = head_forward(weights, out1.at({cfg.branch_rate(0), last}),
                          out1.at({cfg.branch_rate(1), last}), attention, s[2], s[3]);
  if (table) {
    Expr total = latency_terms.front();
    for (std::size_t i = 1; i < latency_terms.size(); ++i) total = add(total, latency_terms[i]);
    r.latency = total;
  }
  return r;
}

SearchResult search(const SearchSpaceConfig& config, const Dataset& data,
                    const LatencyTable& table, const SearchOptions& options,
                    const SearchCallback& on_step) {
  if (options.iterations < 1) throw std::invalid_argument("search needs iterations >= 1");
  if (data.size() == 0) throw std::invalid_argument("search needs a nonempty dataset");
  if (options.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (data.num_classes != config.num_classes) {
    throw std::invalid_argument("dataset has " + std::to_string(data.num_classes) +
                                " classes but the search space expects " +
                                std::to_string(config.num_classes));
  }
  const int ignore = data.ignore_index.value_or(-1);

  SearchResult result{NetworkSpec{}, NetworkSpec{},
                      create_supernet_weights(config, options.seed), ArchParams(config), {}};
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);

  // Weights train on the first half, architecture on the second.
  const std::size_t half = std::max<std::size_t>(1, data.size() / 2);
  std::vector<std::size_t> first, second;
  for (std::size_t i = 0; i < data.size(); ++i) (i < half ? first : second).push_back(i);
  if (second.empty()) second = first;
  BatchSampler weight_batches(first, rng), arch_batches(second, rng);

  Sgd weight_opt(options.weight_lr, options.weight_momentum);
  Sgd arch_opt(options.arch_lr);
  ParameterStore& weights = result.weights;
  ParameterStore& logits = result.arch.logits();

  for (int it = 0; it < options.iterations; ++it) {
    SearchStep step;
    step.iteration = it;
    {
      const Batch b = make_batch(data, weight_batches.next(options.batch_size));
      Graph g;
      Binder wb(g, weights, true), ab(g, logits, false);
      auto out = supernet_forward(wb, ab, result.arch, g.constant(b.images), rng, options.tau,
                                  nullptr, options.head_attention);
      Expr loss = softmax_cross_entropy(out.logits, b.labels, ignore);
      step.weight_loss = loss.value().item();
      if (!std::isfinite(step.weight_loss)) {
        throw std::runtime_error("search: non-finite weight loss at iteration " +
                                 std::to_string(it));
      }
      weights.zero_grad();
      g.backward(loss);
      clip_grad_norm(weights, options.grad_clip);
      weight_opt.step(weights);
    }
    {
      const Batch b = make_batch(data, arch_batches.next(options.batch_size));
      Graph g;
      Binder wb(g, weights, false), ab(g, logits, true);
      auto out =
          supernet_forward(wb, ab, result.arch, g.constant(b.images), rng, options.tau, &table,
                           options.head_attention);
      Expr ce = softmax_cross_entropy(out.logits, b.labels, ignore);
      Expr loss = add(ce, scale(out.latency, options.lambda_latency));
      step.arch_loss = loss.value().item();
      step.latency_ms = out.latency.value().item();
      if (!std::isfinite(step.arch_loss)) {
        throw std::runtime_error("search: non-finite architecture loss at iteration " +
                                 std::to_string(it));
      }
      logits.zero_grad();
      g.backward(loss);
      arch_opt.step(logits);
    }
    result.history.push_back(step);
    if (on_step) on_step(step, result.arch);
  }

  weights.set_origin(weights.content_hash());
  result.teacher = derive_spec(result.arch, Role::kTeacher);
  result.student = derive_spec(result.arch, Role::kStudent);
  result.teacher.fingerprint = result.student.fingerprint = fingerprint_hex(weights.origin());
  return result;
}

}  // namespace mfs
