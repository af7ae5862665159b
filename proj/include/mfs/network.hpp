// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "mfs/attention.hpp"
#include "mfs/layers.hpp"
#include "mfs/search_space.hpp"

namespace mfs {

// Weight prefix of operator `op` in the cell at (rate, layer).
std::string cell_prefix(int rate, int layer, OpKind op);

// Creates the weights of one candidate operator at its widest hidden width.
// Skip has none.
void create_cell_op(ParameterStore& store, const std::string& prefix, OpKind op,
                    std::size_t cell_width, std::size_t max_hidden, Rng& rng);

// Applies one operator with the first `hidden` channels of its weights.
//   skip: identity, or a 0.5 bilinear resize at stride 2
//   conv3x3: 3×3 C→h (stride), relu, 1×1 h→C
//   sepconv3x3: 1×1 C→h, relu, depthwise 3×3 (stride), relu, 1×1 h→C
//   zoomconv3x3: 0.5 resize, conv3x3 path, ×2 resize back at stride 1
// Non-skip operators at stride 1 are residual: x + f(x).
Expr cell_op(Binder& bind, const std::string& prefix, OpKind op, const Expr& x, int stride,
             std::size_t hidden);

// β⁰ · prev_half + β¹ · prev_same. prev_half may be twice the spatial size of
// prev_same, in which case it is resized by 0.5 first. beta: [2] on the simplex.
Expr combine_inputs(const Expr& prev_same, const Expr& prev_half, const Expr& beta);

// Σ_k α_k O_k(x) over the operator set at the cell (rate, layer). `gate`, when
// valid, multiplies every non-skip operator output (the sampled expansion).
Expr mixed_cell(Binder& bind, const SearchSpaceConfig& config, int rate, int layer,
                const Expr& x, const Expr& alpha, int stride, int expansion,
                const Expr& gate = Expr());

// Three 3×3 stride-2 convolutions taking [N,3,H,W] to rate 8 with cell_width channels.
void create_stem(ParameterStore& store, std::size_t cell_width, Rng& rng);
Expr stem_forward(Binder& bind, const Expr& images);

// Fusion head: concat(fine, up(coarse)) → 1×1 fuse → optional attention →
// 1×1 classifier, then bilinear upsampling to (height, width).
void create_head(ParameterStore& store, std::size_t cell_width, std::size_t num_classes,
                 Rng& rng);
Expr head_forward(Binder& bind, const Expr& fine, const Expr& coarse, bool attention,
                  std::size_t height, std::size_t width,
                  const AttentionOverride& override_ = {});
AdaptiveAttention head_attention(std::size_t cell_width);

// Weights for every node of the supernet plus stem and head.
ParameterStore create_supernet_weights(const SearchSpaceConfig& config, std::uint64_t seed);

// Logits [N,k,H,W] of a derived network evaluated against a (possibly wider)
// shared store.
Expr network_forward(Binder& bind, const NetworkSpec& spec, const Expr& images,
                     const AttentionOverride& override_ = {});

// Copies out exactly the weights `spec` reads, sliced to the widths it uses.
// network_forward against the result matches the shared store bit for bit.
ParameterStore extract_weights(const NetworkSpec& spec, const ParameterStore& store);

}  // namespace mfs
