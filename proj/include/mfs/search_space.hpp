// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mfs {

enum class OpKind { kSkip, kConv3x3, kSepConv3x3, kZoomConv3x3 };

inline constexpr OpKind kAllOps[] = {OpKind::kSkip, OpKind::kConv3x3, OpKind::kSepConv3x3,
                                     OpKind::kZoomConv3x3};

const char* op_name(OpKind op);
// Throws std::invalid_argument("unknown operator kind ...").
OpKind op_from_name(std::string_view name);

enum class Role { kTeacher, kStudent };
const char* role_name(Role role);
Role role_from_name(std::string_view name);

struct SearchSpaceConfig {
  int num_layers = 16;
  std::vector<int> rates = {8, 16, 32};
  std::vector<int> expansion_ratios = {4, 6, 8, 10, 12};
  int num_branches = 2;
  std::vector<OpKind> ops = {std::begin(kAllOps), std::end(kAllOps)};
  int student_max_expansion = 8;
  int base_width = 8;   // hidden width of a cell = base_width · expansion
  int cell_width = 16;  // channels entering and leaving every cell
  int trunk_layers = 3;  // layers shared by both branches
  int num_classes = 4;

  void validate() const;
  int max_expansion() const;
  int max_hidden() const { return base_width * max_expansion(); }
  // Layer index of the first node at `rate`.
  int first_layer(int rate) const;
  // Output rate of branch b.
  // Branch 0 ends at the finest rate, branch 1 at the coarsest.
  int branch_rate(int b) const { return b == 0 ? rates.front() : rates.back(); }

  nlohmann::ordered_json to_json() const;
  static SearchSpaceConfig from_json(const nlohmann::ordered_json& j);
};

struct LayerSpec {
  OpKind op = OpKind::kSkip;
  int stride = 1;
  int expansion = 0;
  int rate = 8;  // input down-sampling rate; output rate is rate · stride

  bool operator==(const LayerSpec&) const = default;
};

struct BranchSpec {
  std::vector<LayerSpec> layers;
  int output_rate = 16;

  bool operator==(const BranchSpec&) const = default;
};

// A discrete network. Layer i of the trunk and layer j of a branch use the
// supernet cell at (rate, layer index), so a spec binds directly into the
// weight store it was derived from.
struct NetworkSpec {
  Role role = Role::kTeacher;
  int base_width = 8;
  int cell_width = 16;
  int num_classes = 4;
  bool attention = true;
  std::string fingerprint;  // origin of the weight store, hex
  std::vector<LayerSpec> layers;  // shared trunk
  std::vector<BranchSpec> branches;

  // Global layer index of branch layer j.
  int branch_layer_index(int j) const { return static_cast<int>(layers.size()) + j; }
  int max_expansion() const;
  // Number of leading layers branch b shares with some earlier branch. Those
  // layers see the same input and weights, so their outputs are reused.
  int shared_prefix(int branch) const;
  // (global layer index, layer) of every layer a forward pass evaluates:
  // the trunk, then each branch minus its shared prefix.
  std::vector<std::pair<int, LayerSpec>> computed_layers() const;

  // Rejects illegal rate transitions and inconsistent branch endpoints.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static NetworkSpec from_json(const nlohmann::ordered_json& j);
  std::string dump() const;  // two-space indented JSON
  static NetworkSpec parse(const std::string& text);

  bool operator==(const NetworkSpec&) const = default;
};

}  // namespace mfs
