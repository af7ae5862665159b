// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>

#include "mfs/layers.hpp"

namespace mfs {

inline constexpr std::size_t kDefaultReduction = 4;

// Squeeze-excitation channel gate: s = sigmoid(W2 · relu(W1 · avgpool(u))),
// output u_c · s_c. Weights live in a store under `prefix`.
struct SEBlock {
  std::string prefix;
  std::size_t channels = 0;
  std::size_t reduction = kDefaultReduction;

  std::string reduce_name() const { return prefix + ".reduce"; }  // [C/r, C]
  std::string expand_name() const { return prefix + ".expand"; }  // [C, C/r]

  static SEBlock create(ParameterStore& store, const std::string& prefix,
                        std::size_t channels, Rng& rng,
                        std::size_t reduction = kDefaultReduction);
};

// Channel scale vector s: [N,C,1,1].
Expr se_scale(Binder& bind, const SEBlock& block, const Expr& input);
Expr se_forward(Binder& bind, const SEBlock& block, const Expr& input);

// Four-direction ReLU recurrence. A shared 1×1 projection injects the input;
// each direction owns a per-channel recurrent weight initialised to one.
struct IrnnBlock {
  std::string prefix;
  std::size_t channels = 0;

  static constexpr std::array<Direction, 4> kDirections = {
      Direction::kRight, Direction::kLeft, Direction::kDown, Direction::kUp};

  std::string projection() const { return prefix + ".in"; }  // conv prefix
  std::string recurrent_name(Direction d) const;

  // The input projection starts as `injection_gain` times the identity.
  static IrnnBlock create(ParameterStore& store, const std::string& prefix,
                          std::size_t channels, double injection_gain = 1.0);
};

// [N,C,H,W] -> [N,4C,H,W], directions concatenated right, left, down, up.
Expr irnn_pass(Binder& bind, const IrnnBlock& block, const Expr& input);

// Test hooks for the attention branch.
struct AttentionOverride {
  std::optional<double> map_value;  // replace the sigmoid map with a constant
};

struct SpatialAttention {
  std::string prefix;
  std::size_t channels = 0;
  IrnnBlock first;
  IrnnBlock second;
  SEBlock gate;

  std::string merge() const { return prefix + ".merge"; }        // 4C -> C between rounds
  std::string map_conv() const { return prefix + ".map"; }       // C -> 1 attention map
  std::string projection() const { return prefix + ".proj"; }   // 4C -> C output

  // Names and widths only; no weights are created.
  static SpatialAttention layout(const std::string& prefix, std::size_t channels);
  static SpatialAttention create(ParameterStore& store, const std::string& prefix,
                                 std::size_t channels, Rng& rng);
};

struct SpatialAttentionResult {
  Expr irnn;           // two-round IRNN output [N,4C,H,W]
  Expr attention_map;  // [N,1,H,W]
  Expr gated;          // irnn ⊙ map
  Expr features;       // SE-gated relu(projection(gated)) [N,C,H,W]
};

// IRNN round 1 -> merge -> IRNN round 2 only.
Expr two_round_irnn(Binder& bind, const SpatialAttention& core, const Expr& input);

SpatialAttentionResult spatial_attention(Binder& bind, const SpatialAttention& core,
                                         const Expr& input,
                                         const AttentionOverride& override_ = {});

// Residual wrapper: relu(input + spatial attention features).
struct AdaptiveAttention {
  SpatialAttention core;

  static AdaptiveAttention layout(const std::string& prefix, std::size_t channels) {
    return AdaptiveAttention{SpatialAttention::layout(prefix, channels)};
  }
  static AdaptiveAttention create(ParameterStore& store, const std::string& prefix,
                                  std::size_t channels, Rng& rng);
};

Expr adaptive_attention_forward(Binder& bind, const AdaptiveAttention& module,
                                const Expr& input, const AttentionOverride& override_ = {});

// Parameter count of an AdaptiveAttention over `channels`.
std::size_t adaptive_attention_params(std::size_t channels,
                                      std::size_t reduction = kDefaultReduction);

}  // namespace mfs
