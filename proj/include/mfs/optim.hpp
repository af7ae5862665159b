// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "mfs/graph.hpp"

namespace mfs {

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

// v ← μ·v + g;  w ← w − lr·v. With μ = 0 this is plain gradient descent.
class Sgd {
 public:
  explicit Sgd(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}

  // Updates every parameter of the store from its accumulated gradient.
  void step(ParameterStore& store);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, Tensor, std::less<>> velocity_;
};

}  // namespace mfs
