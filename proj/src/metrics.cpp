// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mfs {

ConfusionMatrix::ConfusionMatrix(int num_classes, std::optional<int> ignore)
    : k_(num_classes), ignore_(ignore) {
  if (num_classes < 1) throw std::invalid_argument("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(k_) * k_, 0);
}

void ConfusionMatrix::accumulate(std::span<const int> truth, std::span<const int> pred,
                                 std::size_t width) {
  if (truth.size() != pred.size()) {
    throw std::invalid_argument("label maps differ in size: " + std::to_string(truth.size()) +
                                " vs " + std::to_string(pred.size()));
  }
  auto where = [&](std::size_t i) {
    const std::size_t w = width == 0 ? truth.size() : width;
    return "(" + std::to_string(i / w) + ", " + std::to_string(i % w) + ")";
  };
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = pred[i];
    if (t < 0 || t >= k_) {
      throw std::out_of_range("truth label " + std::to_string(t) + " out of range at pixel " +
                              where(i));
    }
    if (!counted(t)) continue;
    if (p < 0 || p >= k_) {
      throw std::out_of_range("predicted label " + std::to_string(p) +
                              " out of range at pixel " + where(i));
    }
    ++counts_[static_cast<std::size_t>(t) * k_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw std::invalid_argument("cannot merge matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

void ConfusionMatrix::require_nonempty() const {
  if (total() == 0) throw std::logic_error("confusion matrix is empty");
}

double ConfusionMatrix::pixel_accuracy() const {
  require_nonempty();
  std::uint64_t diag = 0;
  for (int i = 0; i < k_; ++i) diag += at(i, i);
  return static_cast<double>(diag) / static_cast<double>(total());
}

double ConfusionMatrix::mean_pixel_accuracy() const {
  require_nonempty();
  double sum = 0;
  int n = 0;
  for (int i = 0; i < k_; ++i) {
    if (!counted(i)) continue;
    std::uint64_t row = 0;
    for (int j = 0; j < k_; ++j) row += at(i, j);
    if (row == 0) continue;
    sum += static_cast<double>(at(i, i)) / static_cast<double>(row);
    ++n;
  }
  return sum / n;
}

std::vector<double> ConfusionMatrix::class_iou() const {
  std::vector<double> iou(k_, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < k_; ++i) {
    if (!counted(i)) continue;
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < k_; ++j) {
      row += at(i, j);
      col += at(j, i);
    }
    const std::uint64_t uni = row + col - at(i, i);
    if (uni == 0) continue;
    iou[i] = static_cast<double>(at(i, i)) / static_cast<double>(uni);
  }
  return iou;
}

double ConfusionMatrix::mean_iou() const {
  require_nonempty();
  double sum = 0;
  int n = 0;
  for (double v : class_iou()) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return sum / n;
}

nlohmann::ordered_json ConfusionMatrix::report() const {
  nlohmann::ordered_json j;
  j["pixels"] = total();
  j["pa"] = pixel_accuracy();
  j["mpa"] = mean_pixel_accuracy();
  j["miou"] = mean_iou();
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (double v : class_iou()) {
    if (std::isnan(v)) per.push_back(nullptr);
    else per.push_back(v);
  }
  j["class_iou"] = per;
  return j;
}

}  // namespace mfs
