// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/optim.hpp"

#include <cmath>

namespace mfs {

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0;
  for (auto& [name, p] : store) {
    for (double g : p.grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [name, p] : store) {
      for (double& g : p.grad.data()) g *= f;
    }
  }
  return norm;
}

void Sgd::step(ParameterStore& store) {
  for (auto& [name, p] : store) {
    if (momentum_ == 0.0) {
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr_ * p.grad[i];
      continue;
    }
    auto it = velocity_.find(name);
    if (it == velocity_.end()) it = velocity_.emplace(name, Tensor(p.value.shape())).first;
    Tensor& v = it->second;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      v[i] = momentum_ * v[i] + p.grad[i];
      p.value[i] -= lr_ * v[i];
    }
  }
}

}  // namespace mfs
