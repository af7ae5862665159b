// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/search_space.hpp"

#include <algorithm>
#include <stdexcept>

namespace mfs {

using nlohmann::ordered_json;

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kSkip: return "skip";
    case OpKind::kConv3x3: return "conv3x3";
    case OpKind::kSepConv3x3: return "sepconv3x3";
    case OpKind::kZoomConv3x3: return "zoomconv3x3";
  }
  throw std::invalid_argument("unknown operator kind");
}

OpKind op_from_name(std::string_view name) {
  for (OpKind op : kAllOps) {
    if (name == op_name(op)) return op;
  }
  throw std::invalid_argument("unknown operator kind '" + std::string(name) + "'");
}

const char* role_name(Role role) { return role == Role::kTeacher ? "teacher" : "student"; }

Role role_from_name(std::string_view name) {
  if (name == "teacher") return Role::kTeacher;
  if (name == "student") return Role::kStudent;
  throw std::invalid_argument("unknown role '" + std::string(name) + "'");
}

void SearchSpaceConfig::validate() const {
  if (rates != std::vector<int>{8, 16, 32} || num_branches != 2) {
    throw std::invalid_argument("search space supports rates {8,16,32} with 2 branches");
  }
  if (trunk_layers < 1) throw std::invalid_argument("trunk_layers must be >= 1");
  // Branch 1 must still climb from rate 8 to 32 and end with a stride-1 layer.
  if (num_layers < trunk_layers + 3) {
    throw std::invalid_argument("num_layers must be >= trunk_layers + 3, got " +
                                std::to_string(num_layers));
  }
  if (ops.empty()) throw std::invalid_argument("operator set is empty");
  if (expansion_ratios.empty()) throw std::invalid_argument("no expansion ratios");
  for (std::size_t i = 1; i < expansion_ratios.size(); ++i) {
    if (expansion_ratios[i] <= expansion_ratios[i - 1]) {
      throw std::invalid_argument("expansion ratios must be strictly increasing");
    }
  }
  if (expansion_ratios.front() < 1) throw std::invalid_argument("expansion ratios must be >= 1");
  if (std::find(expansion_ratios.begin(), expansion_ratios.end(), student_max_expansion) ==
          expansion_ratios.end() ||
      student_max_expansion >= max_expansion()) {
    throw std::invalid_argument("student_max_expansion must be a ratio below the widest, got " +
                                std::to_string(student_max_expansion));
  }
  if (base_width < 1 || cell_width < 1) throw std::invalid_argument("widths must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
}

int SearchSpaceConfig::max_expansion() const { return expansion_ratios.back(); }

int SearchSpaceConfig::first_layer(int rate) const {
  int l = 0;
  for (int r = rates.front(); r < rate; r *= 2) ++l;
  return l;
}

ordered_json SearchSpaceConfig::to_json() const {
  ordered_json j;
  j["num_layers"] = num_layers;
  j["rates"] = rates;
  j["expansion_ratios"] = expansion_ratios;
  j["num_branches"] = num_branches;
  std::vector<std::string> names;
  for (OpKind op : ops) names.emplace_back(op_name(op));
  j["ops"] = names;
  j["student_max_expansion"] = student_max_expansion;
  j["base_width"] = base_width;
  j["cell_width"] = cell_width;
  j["trunk_layers"] = trunk_layers;
  j["num_classes"] = num_classes;
  return j;
}

SearchSpaceConfig SearchSpaceConfig::from_json(const ordered_json& j) {
  SearchSpaceConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.rates = j.at("rates").get<std::vector<int>>();
  c.expansion_ratios = j.at("expansion_ratios").get<std::vector<int>>();
  c.num_branches = j.at("num_branches").get<int>();
  c.ops.clear();
  for (const auto& name : j.at("ops")) c.ops.push_back(op_from_name(name.get<std::string>()));
  c.student_max_expansion = j.at("student_max_expansion").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.cell_width = j.at("cell_width").get<int>();
  c.trunk_layers = j.at("trunk_layers").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.validate();
  return c;
}

int NetworkSpec::max_expansion() const {
  int m = 0;
  for (const auto& l : layers) m = std::max(m, l.expansion);
  for (const auto& b : branches)
    for (const auto& l : b.layers) m = std::max(m, l.expansion);
  return m;
}

int NetworkSpec::shared_prefix(int branch) const {
  const auto& mine = branches.at(static_cast<std::size_t>(branch)).layers;
  std::size_t best = 0;
  for (int b = 0; b < branch; ++b) {
    const auto& other = branches[static_cast<std::size_t>(b)].layers;
    std::size_t n = 0;
    while (n < mine.size() && n < other.size() && mine[n] == other[n]) ++n;
    best = std::max(best, n);
  }
  return static_cast<int>(best);
}

std::vector<std::pair<int, LayerSpec>> NetworkSpec::computed_layers() const {
  std::vector<std::pair<int, LayerSpec>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) out.emplace_back(static_cast<int>(i), layers[i]);
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const auto& br = branches[b].layers;
    for (std::size_t j = static_cast<std::size_t>(shared_prefix(static_cast<int>(b)));
         j < br.size(); ++j) {
      out.emplace_back(branch_layer_index(static_cast<int>(j)), br[j]);
    }
  }
  return out;
}

namespace {

void check_layer(const LayerSpec& l, int expected_rate, const std::string& where) {
  if (l.stride != 1 && l.stride != 2) {
    throw std::invalid_argument(where + ": stride must be 1 or 2, got " +
                                std::to_string(l.stride));
  }
  if (l.rate != expected_rate) {
    throw std::invalid_argument(where + ": illegal transition, input rate " +
                                std::to_string(l.rate) + " after output rate " +
                                std::to_string(expected_rate));
  }
  if (l.rate * l.stride > 32) {
    throw std::invalid_argument(where + ": output rate " + std::to_string(l.rate * l.stride) +
                                " exceeds 32");
  }
  if (l.expansion < 1) throw std::invalid_argument(where + ": expansion must be >= 1");
}

ordered_json layer_json(const LayerSpec& l) {
  ordered_json j;
  j["op"] = op_name(l.op);
  j["stride"] = l.stride;
  j["expansion"] = l.expansion;
  j["rate"] = l.rate;
  return j;
}

LayerSpec layer_from_json(const ordered_json& j) {
  LayerSpec l;
  l.op = op_from_name(j.at("op").get<std::string>());
  l.stride = j.at("stride").get<int>();
  l.expansion = j.at("expansion").get<int>();
  l.rate = j.at("rate").get<int>();
  return l;
}

}  // namespace

void NetworkSpec::validate() const {
  if (layers.empty()) throw std::invalid_argument("network spec has no trunk layers");
  if (branches.empty()) throw std::invalid_argument("network spec has no branches");
  int rate = 8;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    check_layer(layers[i], rate, "trunk layer " + std::to_string(i));
    rate = layers[i].rate * layers[i].stride;
  }
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const auto& br = branches[b];
    int r = rate;
    for (std::size_t i = 0; i < br.layers.size(); ++i) {
      check_layer(br.layers[i], r,
                  "branch " + std::to_string(b) + " layer " + std::to_string(i));
      r = br.layers[i].rate * br.layers[i].stride;
    }
    if (r != br.output_rate) {
      throw std::invalid_argument("branch " + std::to_string(b) + " ends at rate " +
                                  std::to_string(r) + " but declares " +
                                  std::to_string(br.output_rate));
    }
  }
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
}

ordered_json NetworkSpec::to_json() const {
  ordered_json j;
  j["role"] = role_name(role);
  j["base_width"] = base_width;
  j["cell_width"] = cell_width;
  j["num_classes"] = num_classes;
  j["attention"] = attention;
  j["fingerprint"] = fingerprint;
  ordered_json trunk = ordered_json::array();
  for (const auto& l : layers) trunk.push_back(layer_json(l));
  j["layers"] = trunk;
  ordered_json brs = ordered_json::array();
  for (const auto& b : branches) {
    ordered_json bj;
    ordered_json ls = ordered_json::array();
    for (const auto& l : b.layers) ls.push_back(layer_json(l));
    bj["layers"] = ls;
    bj["output_rate"] = b.output_rate;
    brs.push_back(bj);
  }
  j["branches"] = brs;
  return j;
}

NetworkSpec NetworkSpec::from_json(const ordered_json& j) {
  NetworkSpec s;
  s.role = role_from_name(j.at("role").get<std::string>());
  s.base_width = j.at("base_width").get<int>();
  s.cell_width = j.at("cell_width").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  s.attention = j.at("attention").get<bool>();
  s.fingerprint = j.at("fingerprint").get<std::string>();
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
  for (const auto& bj : j.at("branches")) {
    BranchSpec b;
    for (const auto& l : bj.at("layers")) b.layers.push_back(layer_from_json(l));
    b.output_rate = bj.at("output_rate").get<int>();
    s.branches.push_back(std::move(b));
  }
  s.validate();
  return s;
}

std::string NetworkSpec::dump() const { return to_json().dump(2) + "\n"; }

NetworkSpec NetworkSpec::parse(const std::string& text) {
  return from_json(ordered_json::parse(text));
}

}  // namespace mfs
