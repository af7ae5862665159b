// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/layers.hpp"

#include <cmath>

namespace mfs {

Expr Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Parameter& p = store_.get(name);
  Expr e = trainable_ ? graph_.parameter(p) : graph_.constant(p.value);
  bound_.emplace(name, e);
  used_.push_back(name);
  return e;
}

double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape));
  const double std_dev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  // Box-Muller keeps the stream identical across standard libraries.
  for (std::size_t i = 0; i < t.size(); i += 2) {
    const double u1 = uniform_open(rng);
    const double u2 = uniform_open(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    t[i] = std_dev * r * std::cos(2 * M_PI * u2);
    if (i + 1 < t.size()) t[i + 1] = std_dev * r * std::sin(2 * M_PI * u2);
  }
  return t;
}

void add_conv(ParameterStore& store, const std::string& prefix, std::size_t ci,
              std::size_t co, std::size_t k, Rng& rng, double gain) {
  store.add(prefix + ".w", he_normal({co, ci, k, k}, ci * k * k, rng, gain));
  store.add(prefix + ".b", Tensor({co}));
}

Expr conv_bias(Binder& bind, const std::string& prefix, const Expr& x, int stride,
               std::size_t co) {
  Expr w = bind(prefix + ".w");
  Expr b = bind(prefix + ".b");
  const std::size_t ci = x.shape()[1];
  if (w.shape()[1] != ci) w = narrow(w, 1, 0, ci);
  if (co != 0 && co != w.shape()[0]) {
    w = narrow(w, 0, 0, co);
    b = narrow(b, 0, 0, co);
  }
  const int k = static_cast<int>(w.shape()[2]);
  return add_bias(conv2d(x, w, stride, k / 2), b);
}

}  // namespace mfs
