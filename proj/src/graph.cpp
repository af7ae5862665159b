// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/graph.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mfs {

Parameter& ParameterStore::add(const std::string& name, Tensor init) {
  Tensor grad(init.shape());
  auto [it, inserted] =
      params_.try_emplace(name, Parameter{name, std::move(init), std::move(grad)});
  if (!inserted) throw std::invalid_argument("duplicate parameter '" + name + "'");
  return it->second;
}

Parameter& ParameterStore::get(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  }
  return it->second;
}

const Parameter& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

bool ParameterStore::contains(std::string_view name) const {
  return params_.find(name) != params_.end();
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  fnv_bytes(h, b, 8);
}

constexpr char kStoreMagic[4] = {'M', 'F', 'S', 'W'};

}  // namespace

std::uint64_t ParameterStore::content_hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, p] : params_) {
    fnv_bytes(h, name.data(), name.size());
    for (auto d : p.value.shape()) fnv_u64(h, d);
    for (double v : p.value.data()) fnv_u64(h, std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kStoreMagic, 4);
  write_u64(out, origin_);
  write_u64(out, params_.size());
  for (const auto& [name, p] : params_) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, p.value);
  }
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kStoreMagic, 4)) {
    throw std::runtime_error(path.string() + " is not a weight checkpoint");
  }
  ParameterStore store;
  store.origin_ = read_u64(in);
  const auto count = read_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_u64(in);
    if (len > 4096) throw std::runtime_error("corrupt parameter name in " + path.string());
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) {
      throw std::runtime_error("truncated checkpoint " + path.string());
    }
    store.add(name, read_tensor(in));
  }
  return store;
}

std::string fingerprint_hex(std::uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
  return buf;
}

const Tensor& Expr::value() const { return graph_->value(id_); }

bool Expr::requires_grad() const { return graph_->requires_grad(id_); }

Expr Graph::constant(Tensor value) {
  auto& node = nodes_.emplace_back();
  node.value = std::move(value);
  return Expr(this, static_cast<int>(nodes_.size() - 1));
}

Expr Graph::input(Tensor value, bool requires_grad) {
  auto& node = nodes_.emplace_back();
  node.value = std::move(value);
  node.needs_grad = requires_grad;
  return Expr(this, static_cast<int>(nodes_.size() - 1));
}

Expr Graph::parameter(Parameter& param) {
  auto& node = nodes_.emplace_back();
  node.value = param.value;
  node.needs_grad = true;
  node.param = &param;
  return Expr(this, static_cast<int>(nodes_.size() - 1));
}

Expr Graph::record(Tensor value, const std::vector<Expr>& inputs, Backward backward) {
  auto& node = nodes_.emplace_back();
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& e : inputs) {
    if (e.graph() != this) throw std::invalid_argument("expression from another graph");
    node.inputs.push_back(e.id());
    node.needs_grad = node.needs_grad || nodes_[e.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  return Expr(this, static_cast<int>(nodes_.size() - 1));
}

Tensor& Graph::grad_buffer(Node& node) {
  if (node.grad.size() != node.value.size()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Graph::backward(const Expr& loss) {
  if (nodes_.empty()) throw std::logic_error("backward on an empty tape");
  if (loss.graph() != this) throw std::invalid_argument("loss recorded on another graph");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                shape_str(loss.shape()));
  }
  if (backward_done_) {
    throw std::logic_error("backward already ran on this tape; reset() first");
  }
  backward_done_ = true;

  grad_buffer(nodes_[loss.id()]).fill(1.0);
  std::vector<Tensor*> dinputs;
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.needs_grad || node.grad.empty()) continue;
    if (node.backward) {
      dinputs.assign(node.inputs.size(), nullptr);
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        Node& in = nodes_[node.inputs[i]];
        if (in.needs_grad) dinputs[i] = &grad_buffer(in);
      }
      node.backward(node.value, node.grad, dinputs);
    }
    if (node.param != nullptr) {
      auto dst = node.param->grad.data();
      auto src = node.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

const Tensor& Graph::grad(const Expr& e) { return grad_buffer(nodes_[e.id()]); }

void Graph::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace mfs
