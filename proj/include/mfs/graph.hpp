// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mfs/tensor.hpp"

namespace mfs {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named weights shared by every network derived from one search. Iteration
// order is lexicographic by name; references stay valid across insertions.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t total_values() const;

  void zero_grad();

  // FNV-1a over names, shapes and values.
  std::uint64_t content_hash() const;

  // Identity of the search that created the store. Copies keep it, so a
  // teacher and a student trained from the same supernet can be matched.
  std::uint64_t origin() const { return origin_; }
  void set_origin(std::uint64_t origin) { origin_ = origin; }

  void save(const std::filesystem::path& path) const;
  static ParameterStore load(const std::filesystem::path& path);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter, std::less<>> params_;
  std::uint64_t origin_ = 0;
};

std::string fingerprint_hex(std::uint64_t fingerprint);

class Graph;

// Handle to a value recorded on a Graph.
class Expr {
 public:
  Expr() = default;
  Expr(Graph* graph, int id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
// node list backwards is a valid reverse topological order.
class Graph {
 public:
  // Receives the node output, dL/d(out) and the gradient buffers of the inputs (nullptr for
  // inputs that do not need a gradient). Implementations must accumulate.
  using Backward = std::function<void(const Tensor& out, const Tensor& dout,
                                      std::vector<Tensor*>& dinputs)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Expr constant(Tensor value);
  Expr input(Tensor value, bool requires_grad = true);
  // Gradients of the loss are added into param.grad by backward().
  Expr parameter(Parameter& param);

  Expr record(Tensor value, const std::vector<Expr>& inputs, Backward backward);

  void backward(const Expr& loss);
  const Tensor& grad(const Expr& e);

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  void reset();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::vector<int> inputs;
    Backward backward;
    Parameter* param = nullptr;
  };
  Tensor& grad_buffer(Node& node);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace mfs
