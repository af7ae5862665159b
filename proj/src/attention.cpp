// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/attention.hpp"

#include <stdexcept>

namespace mfs {
namespace {

constexpr double kAttentionInjectionGain = 0.125;

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::kRight: return "right";
    case Direction::kLeft: return "left";
    case Direction::kDown: return "down";
    case Direction::kUp: return "up";
  }
  return "?";
}

void require_channels(const Expr& x, std::size_t channels, const char* what) {
  if (x.shape().size() != 4 || x.shape()[1] != channels) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(channels) +
                                " channels, got input " + shape_str(x.shape()));
  }
}

}  // namespace

SEBlock SEBlock::create(ParameterStore& store, const std::string& prefix, std::size_t channels,
                        Rng& rng, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0 || channels == 0) {
    throw std::invalid_argument("SE block: " + std::to_string(channels) +
                                " channels not divisible by reduction " +
                                std::to_string(reduction));
  }
  SEBlock b{prefix, channels, reduction};
  const std::size_t hidden = channels / reduction;
  store.add(b.reduce_name(), he_normal({hidden, channels}, channels, rng));
  store.add(b.expand_name(), he_normal({channels, hidden}, hidden, rng));
  return b;
}

Expr se_scale(Binder& bind, const SEBlock& block, const Expr& input) {
  require_channels(input, block.channels, "se_forward");
  Expr z = global_avg_pool(input);
  Expr hidden = relu(matvec(bind(block.reduce_name()), z));
  return sigmoid(matvec(bind(block.expand_name()), hidden));
}

Expr se_forward(Binder& bind, const SEBlock& block, const Expr& input) {
  return scale_channels(input, se_scale(bind, block, input));
}

std::string IrnnBlock::recurrent_name(Direction d) const {
  return prefix + ".rec." + direction_name(d);
}

IrnnBlock IrnnBlock::create(ParameterStore& store, const std::string& prefix,
                            std::size_t channels, double injection_gain) {
  IrnnBlock b{prefix, channels};
  Tensor eye({channels, channels, 1, 1});
  for (std::size_t c = 0; c < channels; ++c) eye.at(c, c, 0, 0) = injection_gain;
  store.add(b.projection() + ".w", std::move(eye));
  store.add(b.projection() + ".b", Tensor({channels}));
  for (Direction d : kDirections) store.add(b.recurrent_name(d), Tensor({channels}, 1.0));
  return b;
}

Expr irnn_pass(Binder& bind, const IrnnBlock& block, const Expr& input) {
  require_channels(input, block.channels, "irnn_pass");
  Expr injected = conv_bias(bind, block.projection(), input, 1);
  std::vector<Expr> sweeps;
  for (Direction d : IrnnBlock::kDirections) {
    sweeps.push_back(irnn_sweep(injected, bind(block.recurrent_name(d)), d));
  }
  return concat(sweeps, 1);
}

SpatialAttention SpatialAttention::layout(const std::string& prefix, std::size_t channels) {
  SpatialAttention a;
  a.prefix = prefix;
  a.channels = channels;
  a.first = IrnnBlock{prefix + ".irnn1", channels};
  a.second = IrnnBlock{prefix + ".irnn2", channels};
  a.gate = SEBlock{prefix + ".se", channels, kDefaultReduction};
  return a;
}

SpatialAttention SpatialAttention::create(ParameterStore& store, const std::string& prefix,
                                          std::size_t channels, Rng& rng) {
  SpatialAttention a = layout(prefix, channels);
  // Unit recurrences accumulate whole rows and columns, twice over; a small
  // injection keeps the two-round output near the input's scale.
  IrnnBlock::create(store, a.first.prefix, channels, kAttentionInjectionGain);
  IrnnBlock::create(store, a.second.prefix, channels, kAttentionInjectionGain);

  // Merge starts as the mean of the four directional copies of each channel.
  Tensor merge({channels, 4 * channels, 1, 1});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t d = 0; d < 4; ++d) merge.at(c, d * channels + c, 0, 0) = 0.25;
  store.add(a.merge() + ".w", std::move(merge));
  store.add(a.merge() + ".b", Tensor({channels}));

  add_conv(store, a.map_conv(), channels, 1, 1, rng);
  add_conv(store, a.projection(), 4 * channels, channels, 1, rng, 0.5);
  SEBlock::create(store, a.gate.prefix, channels, rng);
  return a;
}

Expr two_round_irnn(Binder& bind, const SpatialAttention& core, const Expr& input) {
  Expr round1 = irnn_pass(bind, core.first, input);
  Expr merged = relu(conv_bias(bind, core.merge(), round1, 1));
  return irnn_pass(bind, core.second, merged);
}

SpatialAttentionResult spatial_attention(Binder& bind, const SpatialAttention& core,
                                         const Expr& input, const AttentionOverride& override_) {
  require_channels(input, core.channels, "spatial_attention");
  SpatialAttentionResult r;
  r.irnn = two_round_irnn(bind, core, input);

  const Shape& s = input.shape();
  if (override_.map_value) {
    r.attention_map = bind.graph().constant(Tensor({s[0], 1, s[2], s[3]}, *override_.map_value));
  } else {
    r.attention_map = sigmoid(conv_bias(bind, core.map_conv(), input, 1));
  }
  std::vector<Expr> tiled(4 * core.channels, r.attention_map);
  r.gated = mul(r.irnn, concat(tiled, 1));
  Expr projected = relu(conv_bias(bind, core.projection(), r.gated, 1));
  r.features = se_forward(bind, core.gate, projected);
  return r;
}

AdaptiveAttention AdaptiveAttention::create(ParameterStore& store, const std::string& prefix,
                                            std::size_t channels, Rng& rng) {
  return AdaptiveAttention{SpatialAttention::create(store, prefix, channels, rng)};
}

Expr adaptive_attention_forward(Binder& bind, const AdaptiveAttention& module,
                                const Expr& input, const AttentionOverride& override_) {
  auto branch = spatial_attention(bind, module.core, input, override_);
  return relu(add(input, branch.features));
}

std::size_t adaptive_attention_params(std::size_t channels, std::size_t reduction) {
  const std::size_t c = channels;
  const std::size_t irnn = c * c + c + 4 * c;
  const std::size_t merge = 4 * c * c + c;
  const std::size_t map = c + 1;
  const std::size_t proj = 4 * c * c + c;
  const std::size_t se = 2 * c * (c / reduction);
  return 2 * irnn + merge + map + proj + se;
}

}  // namespace mfs
