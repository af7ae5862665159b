// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mfs/graph.hpp"

namespace mfs {

// Cross-correlation with zero padding. x: [N,Ci,H,W], kernel: [Co,Ci,K,K].
Expr conv2d(const Expr& x, const Expr& kernel, int stride, int padding);
// One K×K filter per channel. kernel: [C,1,K,K].
Expr depthwise_conv2d(const Expr& x, const Expr& kernel, int stride, int padding);
// Adds bias[C] to every pixel of channel C.
Expr add_bias(const Expr& x, const Expr& bias);

Expr global_avg_pool(const Expr& x);

Expr relu(const Expr& x);
Expr sigmoid(const Expr& x);
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr mul(const Expr& a, const Expr& b);
Expr scale(const Expr& x, double factor);
// Multiplies every element of x by the single value held in `factor`.
Expr scale(const Expr& x, const Expr& factor);
// x: [N,C,H,W], s: [N,C,1,1]. The only broadcast the library supports.
Expr scale_channels(const Expr& x, const Expr& s);

// Applies w: [M,K] to every row of v: [N,K] (or [N,K,1,1]); result keeps the
// trailing singleton extents of v.
Expr matvec(const Expr& w, const Expr& v);

Expr softmax(const Expr& x, int axis);
Expr log_softmax(const Expr& x, int axis);

// Bilinear (half-pixel centers) resize of the spatial extents. Scale is one of
// 0.5, 1 or 2; 0.5 on an odd extent rounds up.
Expr bilinear_resize(const Expr& x, double scale);
Expr resize_to(const Expr& x, std::size_t height, std::size_t width);

Expr concat(const std::vector<Expr>& xs, int axis);
Expr narrow(const Expr& x, int axis, std::size_t start, std::size_t length);

Expr sum(const Expr& x);
Expr mean(const Expr& x);
// Σ_k weights[k] · xs[k]; weights is a length-K vector expression.
Expr weighted_sum(const std::vector<Expr>& xs, const Expr& weights);
// Σ_i x[i] · coeffs[i].
Expr dot(const Expr& x, const Tensor& coeffs);
Expr element(const Expr& x, std::size_t index);
Expr stop_gradient(const Expr& x);

enum class Direction { kRight, kLeft, kDown, kUp };

// ReLU recurrence along one direction: h ← max(w_c · h_prev + x, 0) with a
// per-channel recurrent weight w: [C].
Expr irnn_sweep(const Expr& x, const Expr& recurrent, Direction dir);

// Mean per-pixel cross-entropy over class axis 1 of logits [N,K,H,W];
// labels holds N·H·W class ids. Pixels whose label equals ignore_index are
// skipped (pass -1 to keep every pixel).
Expr softmax_cross_entropy(const Expr& logits, std::span<const int> labels,
                           int ignore_index);

}  // namespace mfs
