// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfs/data.hpp"
#include "mfs/graph.hpp"
#include "mfs/metrics.hpp"
#include "mfs/search_space.hpp"

namespace mfs {

struct TrainConfig {
  int epochs = 20;
  double lr = 1e-2;
  double momentum = 0.9;
  int batch_size = 4;
  std::uint64_t seed = 0;
  double temperature = 4.0;
  double distill_weight = 1.0;
  double grad_clip = 5.0;  // global L2 norm bound, <= 0 disables
  // Overrides the dataset's own ignore index when set.
  std::optional<int> ignore_index;
};

struct EpochReport {
  int epoch = 0;
  double seg_loss = 0;
  double distill_loss = 0;
  double val_miou = 0;  // NaN without a validation set
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;

  std::string to_csv() const;
  nlohmann::ordered_json to_json() const;
};

// exp(z_i/T) / Σ_j exp(z_j/T) along `axis`, max-subtracted.
Tensor temperature_softmax(const Tensor& logits, double temperature, int axis = 1);

// Mean over pixels of KL(q_s ‖ q_t) with q = temperature_softmax(·, T) on the
// class axis. The teacher enters as a constant.
Expr distillation_loss(const Expr& student_logits, const Tensor& teacher_logits,
                       double temperature);

// Argmax class per pixel of network_forward at T = 1. images: [N,3,H,W].
std::vector<int> predict(const NetworkSpec& spec, ParameterStore& weights, const Tensor& images);

ConfusionMatrix evaluate(const NetworkSpec& spec, ParameterStore& weights, const Dataset& data,
                         std::optional<int> ignore_index = std::nullopt);

// Cross-entropy training of a teacher spec, attention head per spec.attention.
TrainReport train_teacher(const NetworkSpec& spec, ParameterStore& weights, const Dataset& train,
                          const Dataset* val, const TrainConfig& config);

// Cross-entropy training of a student without a teacher.
TrainReport train_student(const NetworkSpec& spec, ParameterStore& weights, const Dataset& train,
                          const Dataset* val, const TrainConfig& config);

// Cross-entropy + distill_weight · distillation loss against a frozen teacher.
// Both weight stores must come from the same search. The full pipeline passes
// a copy of the trained teacher's shared store as `student_weights`, so the
// student starts from the teacher's training; distill_weight = 0 then reduces
// to train_student from that same store.
TrainReport distill_student(const NetworkSpec& student_spec, ParameterStore& student_weights,
                            const NetworkSpec& teacher_spec,
                            const ParameterStore& teacher_weights, const Dataset& train,
                            const Dataset* val, const TrainConfig& config);

}  // namespace mfs
