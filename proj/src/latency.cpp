// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/latency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "mfs/attention.hpp"
#include "mfs/network.hpp"

namespace mfs {
namespace {

using Clock = std::chrono::steady_clock;

std::mutex& benchmark_mutex() {
  static std::mutex m;
  return m;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

// Elementwise work: resize 4 per output value, add/multiply 1, one IRNN
// step 2 (multiply-add); activations are free.
constexpr std::uint64_t kResizeFlops = 4;
constexpr std::uint64_t kIrnnFlops = 2;

std::uint64_t cell_flops(const LayerSpec& l, std::uint64_t c, std::uint64_t hidden,
                         std::uint64_t hi, std::uint64_t wi) {
  const std::uint64_t ho = ceil_div(hi, l.stride), wo = ceil_div(wi, l.stride);
  const std::uint64_t residual = l.stride == 1 ? ho * wo * c : 0;
  switch (l.op) {
    case OpKind::kSkip:
      return l.stride == 1 ? 0 : kResizeFlops * ho * wo * c;
    case OpKind::kConv3x3:
      return conv_flops(c, 3, ho, wo, hidden) + conv_flops(hidden, 1, ho, wo, c) + residual;
    case OpKind::kSepConv3x3:
      return conv_flops(c, 1, hi, wi, hidden) + hidden * conv_flops(1, 3, ho, wo, 1) +
             conv_flops(hidden, 1, ho, wo, c) + residual;
    case OpKind::kZoomConv3x3: {
      const std::uint64_t hh = ceil_div(hi, 2), wh = ceil_div(wi, 2);
      std::uint64_t f = kResizeFlops * hh * wh * c + conv_flops(c, 3, hh, wh, hidden) +
                        conv_flops(hidden, 1, hh, wh, c);
      if (l.stride == 1) f += kResizeFlops * hi * wi * c + residual;
      return f;
    }
  }
  throw std::invalid_argument("unknown operator kind");
}

std::uint64_t cell_params(const LayerSpec& l, std::uint64_t c, std::uint64_t hidden) {
  switch (l.op) {
    case OpKind::kSkip:
      return 0;
    case OpKind::kConv3x3:
    case OpKind::kZoomConv3x3:
      return conv_params(c, 3, hidden) + conv_params(hidden, 1, c);
    case OpKind::kSepConv3x3:
      return conv_params(c, 1, hidden) + hidden * conv_params(1, 3, 1) + conv_params(hidden, 1, c);
  }
  throw std::invalid_argument("unknown operator kind");
}

std::uint64_t attention_flops(std::uint64_t c, std::uint64_t h, std::uint64_t w) {
  const std::uint64_t hw = h * w;
  const std::uint64_t irnn = conv_flops(c, 1, h, w, c) + 4 * kIrnnFlops * hw * c;
  const std::uint64_t se = hw * c + conv_flops(c, 1, 1, 1, c / kDefaultReduction) +
                           conv_flops(c / kDefaultReduction, 1, 1, 1, c) + hw * c;
  return 2 * irnn + conv_flops(4 * c, 1, h, w, c) + conv_flops(c, 1, h, w, 1) + 4 * c * hw +
         conv_flops(4 * c, 1, h, w, c) + se + hw * c;
}

template <typename Fn>
void for_each_layer(const NetworkSpec& spec, Fn fn) {
  for (const auto& [index, l] : spec.computed_layers()) fn(l);
}

}  // namespace

std::string LatencyKey::str() const {
  return std::string(op_name(op)) + "/stride" + std::to_string(stride) + "/x" +
         std::to_string(expansion) + "/r" + std::to_string(resolution);
}

void LatencyTable::set(const LatencyKey& key, double ms) {
  if (!(ms > 0) || !std::isfinite(ms)) {
    throw std::invalid_argument("latency for " + key.str() + " must be positive, got " +
                                std::to_string(ms));
  }
  entries_[key] = ms;
}

double LatencyTable::get(const LatencyKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw std::out_of_range("latency table has no entry " + key.str());
  return it->second;
}

template <typename Pred>
double LatencyTable::mean_where(Pred pred, const std::string& what) const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& [k, v] : entries_) {
    if (pred(k)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) throw std::out_of_range("latency table has no entries for " + what);
  return sum / static_cast<double>(n);
}

double LatencyTable::op_marginal(OpKind op, int resolution) const {
  return mean_where([&](const LatencyKey& k) { return k.op == op && k.resolution == resolution; },
                    std::string(op_name(op)) + "/r" + std::to_string(resolution));
}

double LatencyTable::stride_marginal(int stride, int resolution) const {
  return mean_where(
      [&](const LatencyKey& k) { return k.stride == stride && k.resolution == resolution; },
      "stride" + std::to_string(stride) + "/r" + std::to_string(resolution));
}

double LatencyTable::expansion_marginal(int expansion, int resolution) const {
  return mean_where(
      [&](const LatencyKey& k) { return k.expansion == expansion && k.resolution == resolution; },
      "x" + std::to_string(expansion) + "/r" + std::to_string(resolution));
}

LatencyTable LatencyTable::scaled(double factor) const {
  LatencyTable t;
  for (const auto& [k, v] : entries_) t.set(k, v * factor);
  return t;
}

std::string LatencyTable::to_csv() const {
  std::string out = "op,stride,expansion,resolution,ms\n";
  char buf[64];
  for (const auto& [k, v] : entries_) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += std::string(op_name(k.op)) + "," + std::to_string(k.stride) + "," +
           std::to_string(k.expansion) + "," + std::to_string(k.resolution) + "," + buf + "\n";
  }
  return out;
}

LatencyTable LatencyTable::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "op,stride,expansion,resolution,ms") {
    throw std::runtime_error("latency CSV: bad header '" + line + "'");
  }
  LatencyTable t;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string op, stride, exp, res, ms;
    if (!std::getline(row, op, ',') || !std::getline(row, stride, ',') ||
        !std::getline(row, exp, ',') || !std::getline(row, res, ',') || !std::getline(row, ms)) {
      throw std::runtime_error("latency CSV line " + std::to_string(lineno) + ": expected 5 fields");
    }
    try {
      t.set({op_from_name(op), std::stoi(stride), std::stoi(exp), std::stoi(res)}, std::stod(ms));
    } catch (const std::exception& e) {
      throw std::runtime_error("latency CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

void LatencyTable::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
}

LatencyTable LatencyTable::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

double regularized_latency(const LayerMarginals& m) {
  return kLatencyWeights[0] * m.op + kLatencyWeights[1] * m.stride +
         kLatencyWeights[2] * m.expansion;
}

LayerMarginals layer_marginals(const LatencyTable& table, const LayerSpec& l) {
  table.get({l.op, l.stride, l.expansion, l.rate});  // the layer itself must be covered
  return {table.op_marginal(l.op, l.rate), table.stride_marginal(l.stride, l.rate),
          table.expansion_marginal(l.expansion, l.rate)};
}

double regularized_latency(const LatencyTable& table, const NetworkSpec& spec) {
  double total = 0;
  for_each_layer(spec, [&](const LayerSpec& l) {
    total += regularized_latency(layer_marginals(table, l));
  });
  return total;
}

double table_latency(const LatencyTable& table, const NetworkSpec& spec) {
  double total = 0;
  for_each_layer(spec, [&](const LayerSpec& l) {
    total += table.get({l.op, l.stride, l.expansion, l.rate});
  });
  return total;
}

LatencyTable benchmark_table(const SearchSpaceConfig& config, std::size_t height,
                             std::size_t width, int reps, std::uint64_t seed) {
  if (reps < 3) throw std::invalid_argument("benchmark_table needs reps >= 3");
  std::unique_lock lock(benchmark_mutex(), std::try_to_lock);
  if (!lock.owns_lock()) throw std::logic_error("another latency benchmark is running");
  config.validate();

  Rng rng(seed);
  const auto c = static_cast<std::size_t>(config.cell_width);
  LatencyTable table;
  for (int rate : config.rates) {
    const std::size_t h = ceil_div(height, rate), w = ceil_div(width, rate);
    Tensor input = he_normal({1, c, h, w}, 1, rng);
    for (OpKind op : config.ops) {
      for (int x : config.expansion_ratios) {
        const auto hidden = static_cast<std::size_t>(config.base_width * x);
        ParameterStore store;
        create_cell_op(store, "op", op, c, hidden, rng);
        for (int stride : {1, 2}) {
          std::vector<double> times;
          for (int r = 0; r <= reps; ++r) {
            Graph g;
            Binder bind(g, store, false);
            const auto t0 = Clock::now();
            Expr y = cell_op(bind, "op", op, g.constant(input), stride, hidden);
            const auto t1 = Clock::now();
            if (!y.value().all_finite()) throw std::runtime_error("non-finite benchmark output");
            if (r > 0) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
          }
          std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
          // Clock resolution floor keeps identity operators strictly positive.
          table.set({op, stride, x, rate}, std::max(times[times.size() / 2], 1e-6));
        }
      }
    }
  }
  return table;
}

std::uint64_t conv_flops(std::uint64_t ci, std::uint64_t k, std::uint64_t h, std::uint64_t w,
                         std::uint64_t co) {
  return (2 * ci * k * k - 1) * h * w * co;
}

std::uint64_t conv_params(std::uint64_t ci, std::uint64_t k, std::uint64_t co) {
  return k * k * ci * co + co;
}

std::uint64_t network_flops(const NetworkSpec& spec, std::size_t height, std::size_t width) {
  const std::uint64_t c = static_cast<std::uint64_t>(spec.cell_width);
  std::uint64_t f = 0;
  std::uint64_t h = height, w = width;
  const std::uint64_t stem[] = {3, 8, 16, c};
  for (int i = 0; i < 3; ++i) {
    h = ceil_div(h, 2);
    w = ceil_div(w, 2);
    f += conv_flops(stem[i], 3, h, w, stem[i + 1]);
  }
  for_each_layer(spec, [&](const LayerSpec& l) {
    const std::uint64_t hidden = static_cast<std::uint64_t>(spec.base_width * l.expansion);
    f += cell_flops(l, c, hidden, ceil_div(height, l.rate), ceil_div(width, l.rate));
  });
  const std::uint64_t h16 = ceil_div(height, 16), w16 = ceil_div(width, 16);
  const std::uint64_t k = static_cast<std::uint64_t>(spec.num_classes);
  f += kResizeFlops * h16 * w16 * c + conv_flops(2 * c, 1, h16, w16, c);
  if (spec.attention) f += attention_flops(c, h16, w16);
  f += conv_flops(c, 1, h16, w16, k) + kResizeFlops * height * width * k;
  return f;
}

std::uint64_t network_params(const NetworkSpec& spec) {
  const std::uint64_t c = static_cast<std::uint64_t>(spec.cell_width);
  std::uint64_t p = conv_params(3, 3, 8) + conv_params(8, 3, 16) + conv_params(16, 3, c);
  // Each (rate, layer, op) cell holds one weight set, sized by its widest use.
  std::map<std::tuple<int, int, OpKind>, std::pair<LayerSpec, std::uint64_t>> cells;
  auto visit = [&](const LayerSpec& l, int index) {
    const auto hidden = static_cast<std::uint64_t>(spec.base_width * l.expansion);
    auto& cell = cells[{l.rate, index, l.op}];
    cell = {l, std::max(cell.second, hidden)};
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) visit(spec.layers[i], static_cast<int>(i));
  for (const auto& b : spec.branches)
    for (std::size_t j = 0; j < b.layers.size(); ++j)
      visit(b.layers[j], spec.branch_layer_index(static_cast<int>(j)));
  for (const auto& [key, cell] : cells) p += cell_params(cell.first, c, cell.second);
  p += conv_params(2 * c, 1, c) + conv_params(c, 1, static_cast<std::uint64_t>(spec.num_classes));
  if (spec.attention) p += adaptive_attention_params(c);
  return p;
}

FpsResult measure_fps(const NetworkSpec& spec, ParameterStore& weights, std::size_t height,
                      std::size_t width, double duration_s) {
  if (!(duration_s >= 1.0)) throw std::invalid_argument("measure_fps needs duration >= 1 s");
  Tensor input({1, 3, height, width}, 0.5);
  FpsResult r;
  const auto t0 = Clock::now();
  double elapsed = 0;
  while (elapsed < duration_s) {
    Graph g;
    Binder bind(g, weights, false);
    network_forward(bind, spec, g.constant(input));
    ++r.frames;
    elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  }
  r.seconds = elapsed;
  r.fps = static_cast<double>(r.frames) / elapsed;
  r.bound = 1.0 / elapsed;
  return r;
}

nlohmann::ordered_json CostReport::to_json() const {
  nlohmann::ordered_json j;
  j["flops"] = flops;
  j["parameters"] = parameters;
  j["fps"] = fps;
  j["fps_bound"] = fps_bound;
  j["regularized_latency_ms"] = regularized_latency_ms;
  return j;
}

std::string CostReport::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%-24s %llu\n%-24s %llu\n%-24s %.2f ± %.2f\n%-24s %.6f\n", "flops",
                static_cast<unsigned long long>(flops), "parameters",
                static_cast<unsigned long long>(parameters), "fps", fps, fps_bound,
                "regularized_latency_ms", regularized_latency_ms);
  return buf;
}

}  // namespace mfs
