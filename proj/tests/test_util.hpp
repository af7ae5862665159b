// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "mfs/data.hpp"
#include "mfs/latency.hpp"
#include "mfs/search_space.hpp"

namespace mfs::testing {

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mfs_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Dataset synthetic_dataset(const std::string& name, std::size_t count, std::size_t height,
                                 std::size_t width, int num_classes, std::uint64_t seed) {
  return load_dataset(
      generate_synthetic(scratch_dir(name), "train", count, height, width, num_classes, seed));
}

// Latency table with fixed, op-ordered costs: skip is far cheapest.
inline LatencyTable synthetic_table(const SearchSpaceConfig& cfg) {
  LatencyTable t;
  const double op_cost[] = {0.05, 4.0, 2.0, 3.0};
  for (int r : cfg.rates)
    for (OpKind op : cfg.ops)
      for (int s : {1, 2})
        for (int x : cfg.expansion_ratios) {
          const double ms = op_cost[static_cast<int>(op)] * (1.0 + 0.1 * x) * (64.0 / r) / s;
          t.set({op, s, x, r}, ms);
        }
  return t;
}

}  // namespace mfs::testing
