// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "mfs/graph.hpp"
#include "mfs/search_space.hpp"

namespace mfs {

struct LatencyKey {
  OpKind op = OpKind::kSkip;
  int stride = 1;
  int expansion = 0;
  int resolution = 8;  // down-sampling rate of the operator input

  auto operator<=>(const LatencyKey&) const = default;
  std::string str() const;
};

// Measured per-operator latencies in milliseconds, with the marginal means
// used by the latency objective.
class LatencyTable {
 public:
  void set(const LatencyKey& key, double ms);
  // Throws std::out_of_range naming the missing key.
  double get(const LatencyKey& key) const;
  bool contains(const LatencyKey& key) const { return entries_.count(key) != 0; }
  std::size_t size() const { return entries_.size(); }
  const std::map<LatencyKey, double>& entries() const { return entries_; }

  // Mean over every entry at `resolution` with the given operator / stride /
  // expansion, the other two axes free.
  double op_marginal(OpKind op, int resolution) const;
  double stride_marginal(int stride, int resolution) const;
  double expansion_marginal(int expansion, int resolution) const;

  LatencyTable scaled(double factor) const;

  std::string to_csv() const;
  static LatencyTable from_csv(const std::string& text);
  void save_csv(const std::filesystem::path& path) const;
  static LatencyTable load_csv(const std::filesystem::path& path);

 private:
  template <typename Pred>
  double mean_where(Pred pred, const std::string& what) const;

  std::map<LatencyKey, double> entries_;
};

// Weights of the operator, stride and expansion marginals.
inline constexpr double kLatencyWeights[3] = {0.001, 0.997, 0.0021};

struct LayerMarginals {
  double op = 0;
  double stride = 0;
  double expansion = 0;
};

double regularized_latency(const LayerMarginals& m);
LayerMarginals layer_marginals(const LatencyTable& table, const LayerSpec& layer);
// Summed over every layer of the network.
double regularized_latency(const LatencyTable& table, const NetworkSpec& spec);
// Sum of raw table entries over the network's layers.
double table_latency(const LatencyTable& table, const NetworkSpec& spec);

// Median forward time of every (op, stride, expansion) at every rate for a
// batch-1 input of height × width. reps ≥ 3; one warm-up run is discarded.
LatencyTable benchmark_table(const SearchSpaceConfig& config, std::size_t height,
                             std::size_t width, int reps, std::uint64_t seed = 0);

// (2·Ci·K² − 1)·H·W·C0
std::uint64_t conv_flops(std::uint64_t ci, std::uint64_t k, std::uint64_t h, std::uint64_t w,
                         std::uint64_t co);
// K²·Ci·C0 + C0
std::uint64_t conv_params(std::uint64_t ci, std::uint64_t k, std::uint64_t co);

// Analytic totals for a derived network on an input of height × width.
std::uint64_t network_flops(const NetworkSpec& spec, std::size_t height, std::size_t width);
std::uint64_t network_params(const NetworkSpec& spec);

struct FpsResult {
  double fps = 0;
  std::uint64_t frames = 0;
  double seconds = 0;
  double bound = 0;  // ± one frame over the measured interval
};

// Runs batch-1 inference in a loop for at least `duration_s` seconds.
FpsResult measure_fps(const NetworkSpec& spec, ParameterStore& weights, std::size_t height,
                      std::size_t width, double duration_s);

struct CostReport {
  std::uint64_t flops = 0;
  std::uint64_t parameters = 0;
  double fps = 0;
  double fps_bound = 0;
  double regularized_latency_ms = 0;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

}  // namespace mfs
