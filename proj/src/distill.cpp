// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/distill.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mfs/layers.hpp"
#include "mfs/network.hpp"
#include "mfs/optim.hpp"

namespace mfs {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kEvalBatch = 8;

int resolve_ignore(const TrainConfig& config, const Dataset& data) {
  if (config.ignore_index) return *config.ignore_index;
  return data.ignore_index.value_or(-1);
}

// Per-sample teacher logits [K,H,W], computed once since the teacher is frozen.
std::vector<Tensor> teacher_logits(const NetworkSpec& spec, const ParameterStore& weights,
                                   const Dataset& data) {
  ParameterStore frozen = weights;
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t idx[] = {i};
    const Batch b = make_batch(data, idx);
    Graph g;
    Binder bind(g, frozen, false);
    const Tensor& z = network_forward(bind, spec, g.constant(b.images)).value();
    Shape s(z.shape().begin() + 1, z.shape().end());
    out.push_back(z.reshaped(s));
  }
  return out;
}

TrainReport run_training(const NetworkSpec& spec, ParameterStore& weights, const Dataset& train,
                         const Dataset* val, const TrainConfig& config,
                         const std::vector<Tensor>* teacher) {
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (train.size() == 0) throw std::invalid_argument("training set is empty");
  if (teacher && !(config.temperature > 0)) {
    throw std::invalid_argument("distillation temperature must be positive");
  }
  const int ignore = resolve_ignore(config, train);
  Rng rng(config.seed);
  Sgd opt(config.lr, config.momentum);
  TrainReport report;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    opt.set_lr(config.lr * std::pow(0.5, (3 * epoch) / config.epochs));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_open(rng) * i)]);
    }
    double seg_sum = 0, kd_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min<std::size_t>(config.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, n);
      const Batch b = make_batch(train, idx);
      Graph g;
      Binder bind(g, weights, true);
      Expr logits = network_forward(bind, spec, g.constant(b.images));
      Expr loss = softmax_cross_entropy(logits, b.labels, ignore);
      seg_sum += loss.value().item();
      if (teacher) {
        std::vector<Tensor> parts;
        for (std::size_t k : idx) parts.push_back((*teacher)[k]);
        Shape s = parts[0].shape();
        Tensor target({n, s[0], s[1], s[2]});
        for (std::size_t k = 0; k < n; ++k) {
          std::copy(parts[k].data().begin(), parts[k].data().end(),
                    target.ptr() + k * parts[k].size());
        }
        Expr kd = distillation_loss(logits, target, config.temperature);
        kd_sum += kd.value().item();
        if (config.distill_weight != 0.0) loss = add(loss, scale(kd, config.distill_weight));
      }
      if (!std::isfinite(loss.value().item())) {
        throw std::runtime_error("training: non-finite loss in epoch " + std::to_string(epoch));
      }
      weights.zero_grad();
      g.backward(loss);
      clip_grad_norm(weights, config.grad_clip);
      opt.step(weights);
      ++batches;
    }
    EpochReport e;
    e.epoch = epoch;
    e.seg_loss = seg_sum / batches;
    e.distill_loss = teacher ? kd_sum / batches : 0.0;
    e.val_miou = val ? evaluate(spec, weights, *val, config.ignore_index).mean_iou()
                     : std::numeric_limits<double>::quiet_NaN();
    e.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report.epochs.push_back(e);
  }
  return report;
}

}  // namespace

std::string TrainReport::to_csv() const {
  std::string out = "epoch,seg_loss,distill_loss,val_miou,seconds\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.6f\n", e.epoch, e.seg_loss,
                  e.distill_loss, e.val_miou, e.seconds);
    out += buf;
  }
  return out;
}

nlohmann::ordered_json TrainReport::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["seg_loss"] = e.seg_loss;
    j["distill_loss"] = e.distill_loss;
    j["val_miou"] = std::isnan(e.val_miou) ? nlohmann::ordered_json(nullptr)
                                           : nlohmann::ordered_json(e.val_miou);
    j["seconds"] = e.seconds;
    arr.push_back(j);
  }
  return arr;
}

Tensor temperature_softmax(const Tensor& logits, double temperature, int axis) {
  if (!(temperature > 0)) {
    throw std::invalid_argument("temperature must be positive, got " + std::to_string(temperature));
  }
  Graph g;
  return softmax(scale(g.constant(logits), 1.0 / temperature), axis).value();
}

Expr distillation_loss(const Expr& student_logits, const Tensor& teacher_logits,
                       double temperature) {
  if (!(temperature > 0)) {
    throw std::invalid_argument("temperature must be positive, got " + std::to_string(temperature));
  }
  const Shape& s = student_logits.shape();
  if (s != teacher_logits.shape() || s.size() < 2) {
    throw std::invalid_argument("distillation_loss: student " + shape_str(s) + " vs teacher " +
                                shape_str(teacher_logits.shape()));
  }
  Graph& g = *student_logits.graph();
  const double inv_t = 1.0 / temperature;
  Expr z = scale(student_logits, inv_t);
  Expr q_s = softmax(z, 1);
  Expr log_q_s = log_softmax(z, 1);
  Tensor tl = teacher_logits;
  for (double& v : tl.data()) v *= inv_t;
  Expr log_t = log_softmax(g.constant(std::move(tl)), 1);
  Expr kl = sum(mul(q_s, sub(log_q_s, log_t)));
  const double pixels = static_cast<double>(student_logits.value().size() / s[1]);
  return scale(kl, 1.0 / pixels);
}

std::vector<int> predict(const NetworkSpec& spec, ParameterStore& weights, const Tensor& images) {
  Graph g;
  Binder bind(g, weights, false);
  const Tensor& z = network_forward(bind, spec, g.constant(images)).value();
  const std::size_t n = z.dim(0), k = z.dim(1), plane = z.dim(2) * z.dim(3);
  std::vector<int> out(n * plane);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      int best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (z[(b * k + c) * plane + p] > z[(b * k + best) * plane + p]) best = static_cast<int>(c);
      }
      out[b * plane + p] = best;
    }
  }
  return out;
}

ConfusionMatrix evaluate(const NetworkSpec& spec, ParameterStore& weights, const Dataset& data,
                         std::optional<int> ignore_index) {
  ConfusionMatrix cm(data.num_classes, ignore_index ? ignore_index : data.ignore_index);
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + kEvalBatch); ++i) {
      idx.push_back(i);
    }
    const Batch b = make_batch(data, idx);
    cm.accumulate(b.labels, predict(spec, weights, b.images), b.images.dim(3));
  }
  return cm;
}

TrainReport train_teacher(const NetworkSpec& spec, ParameterStore& weights, const Dataset& train,
                          const Dataset* val, const TrainConfig& config) {
  if (spec.role != Role::kTeacher) throw std::invalid_argument("train_teacher needs a teacher spec");
  return run_training(spec, weights, train, val, config, nullptr);
}

TrainReport train_student(const NetworkSpec& spec, ParameterStore& weights, const Dataset& train,
                          const Dataset* val, const TrainConfig& config) {
  return run_training(spec, weights, train, val, config, nullptr);
}

TrainReport distill_student(const NetworkSpec& student_spec, ParameterStore& student_weights,
                            const NetworkSpec& teacher_spec,
                            const ParameterStore& teacher_weights, const Dataset& train,
                            const Dataset* val, const TrainConfig& config) {
  if (teacher_spec.role != Role::kTeacher) {
    throw std::invalid_argument("distill_student: teacher spec has role student");
  }
  const std::string s_origin = fingerprint_hex(student_weights.origin());
  const std::string t_origin = fingerprint_hex(teacher_weights.origin());
  if (student_spec.fingerprint != teacher_spec.fingerprint || s_origin != t_origin ||
      s_origin != student_spec.fingerprint) {
    throw std::invalid_argument("distill_student: fingerprint mismatch (student spec " +
                                student_spec.fingerprint + ", teacher spec " +
                                teacher_spec.fingerprint + ", student weights " + s_origin +
                                ", teacher weights " + t_origin + ")");
  }
  const std::vector<Tensor> cached = teacher_logits(teacher_spec, teacher_weights, train);
  return run_training(student_spec, student_weights, train, val, config, &cached);
}

}  // namespace mfs
