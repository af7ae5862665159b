// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mfs/data.hpp"
#include "mfs/latency.hpp"
#include "mfs/layers.hpp"
#include "mfs/search_space.hpp"

namespace mfs {

// A supernet node: the cell at down-sampling rate `rate` in layer `layer`.
struct NodeKey {
  int rate = 8;
  int layer = 0;
  auto operator<=>(const NodeKey&) const = default;
};

// Free logits behind α (operators), β (input paths) and γ (expansion
// ratios). Nodes with a single possible input carry no β.
class ArchParams {
 public:
  explicit ArchParams(const SearchSpaceConfig& config);

  const SearchSpaceConfig& config() const { return config_; }
  const std::vector<NodeKey>& nodes() const { return nodes_; }
  bool has_node(int rate, int layer) const;
  bool has_beta(int rate, int layer) const;

  static std::string alpha_name(const NodeKey& n);
  static std::string beta_name(const NodeKey& n);
  static std::string gamma_name(const NodeKey& n);

  ParameterStore& logits() { return logits_; }
  const ParameterStore& logits() const { return logits_; }

 private:
  SearchSpaceConfig config_;
  std::vector<NodeKey> nodes_;
  ParameterStore logits_;
};

struct NodeProbs {
  std::vector<double> alpha;
  std::vector<double> beta;  // (from half rate, from same rate); empty for single-input nodes
  std::vector<double> gamma;
};

// Softmax of every logit vector, so each α, β, γ lies on its simplex.
struct ArchProbs {
  std::map<NodeKey, NodeProbs> nodes;

  // Weight of the stride-1 edge (rate, layer−1) → (rate, layer).
  double stay_weight(int rate, int layer) const;
  // Weight of the stride-2 edge (rate/2, layer−1) → (rate, layer).
  double move_weight(int rate, int layer) const;
};

ArchProbs project_simplex(const ArchParams& params);

// −log(−log u)
double gumbel_noise(double u);
// argmax_j (log γ_j + o_j) / τ with γ clamped at 1e-12.
int gumbel_argmax(std::span<const double> gamma, std::span<const double> noise, double tau);
// Draws fresh noise, u uniform on the open interval (0, 1).
int gumbel_sample(std::span<const double> gamma, double tau, Rng& rng);

// Straight-through gate for a sampled index j: forward value 1, gradient
// that of softmax((θ + o)/τ)_j with respect to θ.
Expr gumbel_gate(const Expr& theta, std::span<const double> noise, double tau, int index);

// Per-layer argmax over α, greedy stride decisions over β under the branch
// endpoints (16 and 32), and expansion from γ. The teacher takes the widest
// ratio everywhere; the student the best ratio within its cap. Ties go to the
// lower index; stride ties stay at the current rate.
NetworkSpec derive_spec(const ArchParams& params, Role role);

struct SupernetOutput {
  Expr logits;
  Expr latency;  // expected regularized latency; invalid unless requested
};

// Forward pass of the whole supernet with α/β relaxed by softmax and one
// Gumbel-sampled expansion ratio per node. `attention` appends the adaptive
// attention head so its weights train with the rest of the supernet.
SupernetOutput supernet_forward(Binder& weights, Binder& arch, const ArchParams& params,
                                const Expr& images, Rng& rng, double tau,
                                const LatencyTable* table = nullptr, bool attention = false);

struct SearchOptions {
  int iterations = 200;
  std::uint64_t seed = 0;
  double lambda_latency = 0.01;
  double weight_lr = 1e-2;
  double weight_momentum = 0.9;
  double arch_lr = 3e-3;
  double tau = 1.0;
  int batch_size = 2;
  double grad_clip = 5.0;  // global L2 norm bound on weight gradients, <= 0 disables
  bool head_attention = false;  // train the attention head during the weight steps
};

struct SearchStep {
  int iteration = 0;
  double weight_loss = 0;
  double arch_loss = 0;
  double latency_ms = 0;
};

struct SearchResult {
  NetworkSpec teacher;
  NetworkSpec student;
  ParameterStore weights;  // shared by both specs
  ArchParams arch;
  std::vector<SearchStep> history;
};

using SearchCallback = std::function<void(const SearchStep&, const ArchParams&)>;

// Alternates weight updates on the first half of `data` (cross-entropy) with
// architecture updates on the second half (cross-entropy + λ·latency).
SearchResult search(const SearchSpaceConfig& config, const Dataset& data,
                    const LatencyTable& table, const SearchOptions& options,
                    const SearchCallback& on_step = {});

}  // namespace mfs
