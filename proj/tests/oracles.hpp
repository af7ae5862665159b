// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

namespace mfs::testing {

struct MetricValues {
  double pa = 0;
  double mpa = 0;
  double miou = 0;
};

// Per-class pixel-set evaluation, independent of any confusion matrix.
inline MetricValues brute_force_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                                        int num_classes, std::optional<int> ignore = {}) {
  std::vector<std::set<std::size_t>> t(num_classes), p(num_classes);
  std::size_t pixels = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (ignore && truth[i] == *ignore) continue;
    ++pixels;
    t[truth[i]].insert(i);
    p[pred[i]].insert(i);
  }
  MetricValues m;
  double hits = 0, acc_sum = 0, iou_sum = 0;
  int acc_n = 0, iou_n = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::size_t inter = 0;
    for (std::size_t i : t[c]) inter += p[c].count(i);
    std::set<std::size_t> uni = t[c];
    uni.insert(p[c].begin(), p[c].end());
    hits += static_cast<double>(inter);
    if (ignore && c == *ignore) continue;
    if (!t[c].empty()) {
      acc_sum += static_cast<double>(inter) / static_cast<double>(t[c].size());
      ++acc_n;
    }
    if (!uni.empty()) {
      iou_sum += static_cast<double>(inter) / static_cast<double>(uni.size());
      ++iou_n;
    }
  }
  m.pa = hits / static_cast<double>(pixels);
  m.mpa = acc_sum / acc_n;
  m.miou = iou_sum / iou_n;
  return m;
}

// Multiply-adds of a K×K convolution counted by walking every output value:
// Ci·K² multiplications and Ci·K² − 1 additions each.
inline std::uint64_t loop_conv_flops(std::uint64_t ci, std::uint64_t k, std::uint64_t h,
                                     std::uint64_t w, std::uint64_t co) {
  std::uint64_t flops = 0;
  for (std::uint64_t o = 0; o < co; ++o)
    for (std::uint64_t y = 0; y < h; ++y)
      for (std::uint64_t x = 0; x < w; ++x) {
        std::uint64_t mults = 0, adds = 0;
        for (std::uint64_t c = 0; c < ci; ++c)
          for (std::uint64_t a = 0; a < k * k; ++a) {
            ++mults;
            if (c + a > 0) ++adds;
          }
        flops += mults + adds;
      }
  return flops;
}

}  // namespace mfs::testing
