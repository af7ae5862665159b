// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace mfs {

// Pixel counts p_ij: row = true class i, column = predicted class j.
class ConfusionMatrix {
 public:
  // `num_classes` counts every id, including an unlabeled one if present.
  // Pixels whose truth equals `ignore` are skipped and the class is left out
  // of the means.
  explicit ConfusionMatrix(int num_classes, std::optional<int> ignore = std::nullopt);

  // Label maps are row-major with the given width (for error coordinates).
  void accumulate(std::span<const int> truth, std::span<const int> pred, std::size_t width);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return k_; }
  std::optional<int> ignore() const { return ignore_; }
  std::uint64_t at(int truth, int pred) const { return counts_[truth * k_ + pred]; }
  std::uint64_t total() const;

  double pixel_accuracy() const;
  double mean_pixel_accuracy() const;
  double mean_iou() const;
  // NaN for classes excluded from the mean.
  std::vector<double> class_iou() const;

  nlohmann::ordered_json report() const;

 private:
  bool counted(int c) const { return !ignore_ || *ignore_ != c; }
  void require_nonempty() const;

  int k_;
  std::optional<int> ignore_;
  std::vector<std::uint64_t> counts_;
};

}  // namespace mfs
