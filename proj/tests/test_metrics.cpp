// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "mfs/metrics.hpp"
#include "oracles.hpp"

using namespace mfs;

namespace {

ConfusionMatrix hand_tally() {
  ConfusionMatrix cm(2);
  const std::vector<int> truth = {0, 1, 1, 1}, pred = {0, 0, 1, 1};
  cm.accumulate(truth, pred, 2);
  return cm;
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int k) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> v(n);
  for (int& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("hand-tally confusion matrix") {
  const ConfusionMatrix cm = hand_tally();
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(1, 0) == 1);
  CHECK(cm.at(1, 1) == 2);
  CHECK(cm.at(0, 1) == 0);
  CHECK(cm.total() == 4);
  CHECK(cm.pixel_accuracy() == 0.75);
  CHECK(std::abs(cm.mean_pixel_accuracy() - (1.0 + 2.0 / 3.0) / 2) < 1e-15);
  CHECK(std::abs(cm.mean_pixel_accuracy() - 0.8333) < 1e-4);
  CHECK(std::abs(cm.mean_iou() - (0.5 + 2.0 / 3.0) / 2) < 1e-15);
  CHECK(std::abs(cm.mean_iou() - 0.5833) < 1e-4);
}

TEST_CASE("perfect, zero-diagonal and empty updates") {
  ConfusionMatrix cm(3);
  const std::vector<int> a = {0, 1, 2, 2, 1, 0};
  cm.accumulate(a, a, 3);
  CHECK(cm.pixel_accuracy() == 1.0);
  CHECK(cm.mean_pixel_accuracy() == 1.0);
  CHECK(cm.mean_iou() == 1.0);
  cm.accumulate({}, {}, 3);
  CHECK(cm.total() == 6);

  ConfusionMatrix wrong(2);
  const std::vector<int> t = {0, 1}, p = {1, 0};
  wrong.accumulate(t, p, 2);
  CHECK(wrong.pixel_accuracy() == 0.0);
}

TEST_CASE("absent classes are excluded, not counted as zero") {
  ConfusionMatrix cm(4);
  const std::vector<int> t = {0, 0, 1, 1}, p = {0, 0, 1, 1};
  cm.accumulate(t, p, 2);
  CHECK(cm.mean_pixel_accuracy() == 1.0);
  CHECK(cm.mean_iou() == 1.0);
  const auto iou = cm.class_iou();
  CHECK(std::isnan(iou[2]));
  CHECK(std::isnan(iou[3]));
}

TEST_CASE("ignored class is skipped and left out of the means") {
  ConfusionMatrix cm(3, 2);
  const std::vector<int> t = {0, 1, 2, 2}, p = {0, 0, 1, 2};
  cm.accumulate(t, p, 2);
  CHECK(cm.total() == 2);
  CHECK(cm.pixel_accuracy() == 0.5);
  const auto oracle = testing::brute_force_metrics(t, p, 3, 2);
  CHECK(std::abs(cm.mean_iou() - oracle.miou) < 1e-12);
  CHECK(std::abs(cm.mean_pixel_accuracy() - oracle.mpa) < 1e-12);
}

TEST_CASE("metrics match the per-class set oracle on random maps") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 6;
    const auto truth = random_labels(rng, 256, k);
    auto pred = truth;
    // Corrupt a trial-dependent fraction so accuracies span the range.
    std::uniform_real_distribution<double> u(0, 1);
    const double flip = u(rng);
    for (int& v : pred) {
      if (u(rng) < flip) v = std::uniform_int_distribution<int>(0, k - 1)(rng);
    }
    ConfusionMatrix cm(k);
    cm.accumulate(truth, pred, 16);
    const auto o = testing::brute_force_metrics(truth, pred, k);
    CHECK(std::abs(cm.pixel_accuracy() - o.pa) <= 1e-12);
    CHECK(std::abs(cm.mean_pixel_accuracy() - o.mpa) <= 1e-12);
    CHECK(std::abs(cm.mean_iou() - o.miou) <= 1e-12);
    CHECK(cm.mean_iou() <= cm.mean_pixel_accuracy() + 1e-12);
  }
}

TEST_CASE("metrics are invariant to relabelling classes") {
  std::mt19937_64 rng(6);
  const int k = 5;
  const auto truth = random_labels(rng, 256, k);
  const auto pred = random_labels(rng, 256, k);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  std::vector<int> pt(truth.size()), pp(pred.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    pt[i] = perm[truth[i]];
    pp[i] = perm[pred[i]];
  }
  ConfusionMatrix a(k), b(k);
  a.accumulate(truth, pred, 16);
  b.accumulate(pt, pp, 16);
  CHECK(std::abs(a.pixel_accuracy() - b.pixel_accuracy()) < 1e-12);
  CHECK(std::abs(a.mean_pixel_accuracy() - b.mean_pixel_accuracy()) < 1e-12);
  CHECK(std::abs(a.mean_iou() - b.mean_iou()) < 1e-12);
}

TEST_CASE("merging equals accumulating the concatenation") {
  std::mt19937_64 rng(7);
  const auto t1 = random_labels(rng, 64, 3), p1 = random_labels(rng, 64, 3);
  const auto t2 = random_labels(rng, 64, 3), p2 = random_labels(rng, 64, 3);
  ConfusionMatrix a(3), b(3), all(3);
  a.accumulate(t1, p1, 8);
  b.accumulate(t2, p2, 8);
  a.merge(b);
  all.accumulate(t1, p1, 8);
  all.accumulate(t2, p2, 8);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(a.at(i, j) == all.at(i, j));
  CHECK_THROWS_AS(a.merge(ConfusionMatrix(4)), std::invalid_argument);
}

TEST_CASE("metric errors") {
  ConfusionMatrix cm(3);
  CHECK_THROWS_AS(cm.pixel_accuracy(), std::logic_error);
  CHECK_THROWS_AS(cm.mean_iou(), std::logic_error);
  const std::vector<int> t = {0, 1, 2, 1, 0, 1}, p = {0, 1, 3, 1, 0, 1};
  try {
    cm.accumulate(t, p, 3);
    FAIL("expected a throw");
  } catch (const std::out_of_range& e) {
    CHECK(std::string(e.what()).find("(0, 2)") != std::string::npos);
  }
  const std::vector<int> shorter = {0};
  CHECK_THROWS_AS(cm.accumulate(t, shorter, 3), std::invalid_argument);
  CHECK_THROWS_AS(ConfusionMatrix(0), std::invalid_argument);
}

TEST_CASE("report lists every field") {
  const auto r = hand_tally().report();
  for (const char* key : {"pixels", "pa", "mpa", "miou", "class_iou"}) CHECK(r.contains(key));
  CHECK(r["pixels"] == 4);
}
