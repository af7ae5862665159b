// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mfs/graph.hpp"
#include "mfs/ops.hpp"

namespace mfs {

// Binds store parameters onto a graph, once per name. Frozen binders record
// constants, so no gradient reaches the store.
class Binder {
 public:
  Binder(Graph& graph, ParameterStore& store, bool trainable = true)
      : graph_(graph), store_(store), trainable_(trainable) {}

  Expr operator()(const std::string& name);
  Graph& graph() { return graph_; }
  ParameterStore& store() { return store_; }
  bool trainable() const { return trainable_; }
  // Names bound so far, in binding order.
  const std::vector<std::string>& used() const { return used_; }

 private:
  Graph& graph_;
  ParameterStore& store_;
  bool trainable_;
  std::unordered_map<std::string, Expr> bound_;
  std::vector<std::string> used_;
};

using Rng = std::mt19937_64;

// Zero-mean normal init with std = gain·sqrt(2 / fan_in).
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0);

// Uniform draw strictly inside (0, 1); 53-bit resolution.
double uniform_open(Rng& rng);

// conv weights "<prefix>.w" [co,ci,k,k] and bias "<prefix>.b" [co].
void add_conv(ParameterStore& store, const std::string& prefix, std::size_t ci,
              std::size_t co, std::size_t k, Rng& rng, double gain = 1.0);
// Convolution + bias using the first `ci`/`co` channels of the stored weights.
Expr conv_bias(Binder& bind, const std::string& prefix, const Expr& x, int stride,
               std::size_t co = 0);

}  // namespace mfs
