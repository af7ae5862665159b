// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/network.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace mfs {
namespace {

constexpr std::size_t kStemWidths[] = {3, 8, 16};

std::string stem_prefix(int i) { return "stem." + std::to_string(i); }

// First `len` entries of `t` along `axis`.
Tensor slice_front(const Tensor& t, std::size_t axis, std::size_t len) {
  Shape out_shape = t.shape();
  if (out_shape[axis] == len) return t;
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= t.shape()[i];
  for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.shape()[i];
  Tensor out(out_shape);
  const std::size_t src_stride = t.shape()[axis] * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len * inner; ++k) {
      out[o * len * inner + k] = t[o * src_stride + k];
    }
  }
  return out;
}

void copy_param(const ParameterStore& src, ParameterStore& dst, const std::string& name) {
  if (!dst.contains(name)) dst.add(name, src.get(name).value);
}

void copy_sliced(const ParameterStore& src, ParameterStore& dst, const std::string& name,
                 std::size_t axis, std::size_t len) {
  if (!dst.contains(name)) dst.add(name, slice_front(src.get(name).value, axis, len));
}

void copy_conv(const ParameterStore& src, ParameterStore& dst, const std::string& prefix) {
  copy_param(src, dst, prefix + ".w");
  copy_param(src, dst, prefix + ".b");
}

void extract_cell(const ParameterStore& src, ParameterStore& dst, const std::string& prefix,
                  OpKind op, std::size_t hidden) {
  switch (op) {
    case OpKind::kSkip:
      return;
    case OpKind::kConv3x3:
    case OpKind::kZoomConv3x3:
      copy_sliced(src, dst, prefix + ".a.w", 0, hidden);
      copy_sliced(src, dst, prefix + ".a.b", 0, hidden);
      break;
    case OpKind::kSepConv3x3:
      copy_sliced(src, dst, prefix + ".a.w", 0, hidden);
      copy_sliced(src, dst, prefix + ".a.b", 0, hidden);
      copy_sliced(src, dst, prefix + ".dw.w", 0, hidden);
      copy_sliced(src, dst, prefix + ".dw.b", 0, hidden);
      break;
  }
  copy_sliced(src, dst, prefix + ".b.w", 1, hidden);
  copy_param(src, dst, prefix + ".b.b");
}

// The expand half of conv3x3 / zoomconv3x3, without the residual.
Expr conv_path(Binder& bind, const std::string& prefix, const Expr& x, int stride,
               std::size_t hidden) {
  Expr h = relu(conv_bias(bind, prefix + ".a", x, stride, hidden));
  return conv_bias(bind, prefix + ".b", h, 1);
}

}  // namespace

std::string cell_prefix(int rate, int layer, OpKind op) {
  return "cell.r" + std::to_string(rate) + ".l" + std::to_string(layer) + "." + op_name(op);
}

void create_cell_op(ParameterStore& store, const std::string& prefix, OpKind op,
                    std::size_t cell_width, std::size_t max_hidden, Rng& rng) {
  const std::size_t c = cell_width, h = max_hidden;
  switch (op) {
    case OpKind::kSkip:
      return;
    case OpKind::kConv3x3:
    case OpKind::kZoomConv3x3:
      add_conv(store, prefix + ".a", c, h, 3, rng);
      break;
    case OpKind::kSepConv3x3:
      add_conv(store, prefix + ".a", c, h, 1, rng);
      store.add(prefix + ".dw.w", he_normal({h, 1, 3, 3}, 9, rng));
      store.add(prefix + ".dw.b", Tensor({h}));
      break;
  }
  // The projection back to C starts small so stacked residual cells stay stable.
  add_conv(store, prefix + ".b", h, c, 1, rng, 0.5);
}

Expr cell_op(Binder& bind, const std::string& prefix, OpKind op, const Expr& x, int stride,
             std::size_t hidden) {
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument("cell stride must be 1 or 2, got " + std::to_string(stride));
  }
  Expr y;
  switch (op) {
    case OpKind::kSkip:
      return stride == 1 ? x : bilinear_resize(x, 0.5);
    case OpKind::kConv3x3:
      y = conv_path(bind, prefix, x, stride, hidden);
      break;
    case OpKind::kSepConv3x3: {
      Expr h = relu(conv_bias(bind, prefix + ".a", x, 1, hidden));
      Expr dw = narrow(bind(prefix + ".dw.w"), 0, 0, hidden);
      Expr db = narrow(bind(prefix + ".dw.b"), 0, 0, hidden);
      h = relu(add_bias(depthwise_conv2d(h, dw, stride, 1), db));
      y = conv_bias(bind, prefix + ".b", h, 1);
      break;
    }
    case OpKind::kZoomConv3x3: {
      y = conv_path(bind, prefix, bilinear_resize(x, 0.5), 1, hidden);
      if (stride == 1) y = resize_to(y, x.shape()[2], x.shape()[3]);
      break;
    }
  }
  return stride == 1 ? add(x, y) : y;
}

Expr combine_inputs(const Expr& prev_same, const Expr& prev_half, const Expr& beta) {
  const Tensor& b = beta.value();
  if (b.size() != 2 || b[0] < -1e-6 || b[1] < -1e-6 || std::abs(b[0] + b[1] - 1.0) > 1e-6) {
    throw std::invalid_argument("combine_inputs: beta is not on the simplex");
  }
  Expr half = prev_half;
  const Shape& s = prev_same.shape();
  const Shape& h = prev_half.shape();
  if (h[2] != s[2] || h[3] != s[3]) {
    if ((h[2] + 1) / 2 != s[2] || (h[3] + 1) / 2 != s[3]) {
      throw std::invalid_argument("combine_inputs: cannot align " + shape_str(h) + " with " +
                                  shape_str(s));
    }
    half = bilinear_resize(prev_half, 0.5);
  }
  return weighted_sum({half, prev_same}, beta);
}

Expr mixed_cell(Binder& bind, const SearchSpaceConfig& config, int rate, int layer,
                const Expr& x, const Expr& alpha, int stride, int expansion, const Expr& gate) {
  if (alpha.value().size() != config.ops.size()) {
    throw std::invalid_argument("mixed_cell: alpha has " + std::to_string(alpha.value().size()) +
                                " entries for " + std::to_string(config.ops.size()) +
                                " operators");
  }
  const std::size_t hidden = static_cast<std::size_t>(config.base_width * expansion);
  std::vector<Expr> outs;
  for (OpKind op : config.ops) {
    Expr y = cell_op(bind, cell_prefix(rate, layer, op), op, x, stride, hidden);
    if (gate.valid() && op != OpKind::kSkip) y = scale(y, gate);
    outs.push_back(y);
  }
  return weighted_sum(outs, alpha);
}

void create_stem(ParameterStore& store, std::size_t cell_width, Rng& rng) {
  add_conv(store, stem_prefix(0), kStemWidths[0], kStemWidths[1], 3, rng);
  add_conv(store, stem_prefix(1), kStemWidths[1], kStemWidths[2], 3, rng);
  add_conv(store, stem_prefix(2), kStemWidths[2], cell_width, 3, rng);
}

Expr stem_forward(Binder& bind, const Expr& images) {
  if (images.shape().size() != 4 || images.shape()[1] != 3) {
    throw std::invalid_argument("expected images [N,3,H,W], got " + shape_str(images.shape()));
  }
  Expr x = images;
  for (int i = 0; i < 3; ++i) x = relu(conv_bias(bind, stem_prefix(i), x, 2));
  return x;
}

AdaptiveAttention head_attention(std::size_t cell_width) {
  return AdaptiveAttention::layout("head.att", cell_width);
}

void create_head(ParameterStore& store, std::size_t cell_width, std::size_t num_classes,
                 Rng& rng) {
  add_conv(store, "head.fuse", 2 * cell_width, cell_width, 1, rng);
  AdaptiveAttention::create(store, "head.att", cell_width, rng);
  add_conv(store, "head.cls", cell_width, num_classes, 1, rng);
}

Expr head_forward(Binder& bind, const Expr& fine, const Expr& coarse, bool attention,
                  std::size_t height, std::size_t width, const AttentionOverride& override_) {
  const Shape& s = fine.shape();
  Expr up = resize_to(coarse, s[2], s[3]);
  Expr x = relu(conv_bias(bind, "head.fuse", concat({fine, up}, 1), 1));
  if (attention) {
    x = adaptive_attention_forward(bind, head_attention(s[1]), x, override_);
  }
  Expr logits = conv_bias(bind, "head.cls", x, 1);
  return resize_to(logits, height, width);
}

ParameterStore create_supernet_weights(const SearchSpaceConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParameterStore store;
  const auto c = static_cast<std::size_t>(config.cell_width);
  create_stem(store, c, rng);
  for (int rate : config.rates) {
    for (int l = config.first_layer(rate); l < config.num_layers; ++l) {
      for (OpKind op : config.ops) {
        create_cell_op(store, cell_prefix(rate, l, op), op, c,
                       static_cast<std::size_t>(config.max_hidden()), rng);
      }
    }
  }
  create_head(store, c, static_cast<std::size_t>(config.num_classes), rng);
  return store;
}

Expr network_forward(Binder& bind, const NetworkSpec& spec, const Expr& images,
                     const AttentionOverride& override_) {
  Expr x = stem_forward(bind, images);
  auto run = [&](const LayerSpec& l, int index, const Expr& in) {
    return cell_op(bind, cell_prefix(l.rate, index, l.op), l.op, in, l.stride,
                   static_cast<std::size_t>(spec.base_width * l.expansion));
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    x = run(spec.layers[i], static_cast<int>(i), x);
  }
  // trace[b][j]: output of branch b after its first j layers. A branch that
  // repeats the opening layers of an earlier one resumes from its output.
  std::vector<std::vector<Expr>> trace;
  for (std::size_t b = 0; b < spec.branches.size(); ++b) {
    const auto& layers = spec.branches[b].layers;
    std::vector<Expr> t = {x};
    for (std::size_t p = 0; p < b; ++p) {
      const auto& other = spec.branches[p].layers;
      std::size_t n = 0;
      while (n < layers.size() && n < other.size() && layers[n] == other[n]) ++n;
      if (n + 1 > t.size()) t.assign(trace[p].begin(), trace[p].begin() + n + 1);
    }
    for (std::size_t j = t.size() - 1; j < layers.size(); ++j) {
      t.push_back(run(layers[j], spec.branch_layer_index(static_cast<int>(j)), t.back()));
    }
    trace.push_back(std::move(t));
  }
  std::vector<Expr> outs;
  for (const auto& t : trace) outs.push_back(t.back());
  if (outs.size() != 2) throw std::invalid_argument("network spec must have two branches");
  const Shape& s = images.shape();
  return head_forward(bind, outs[0], outs[1], spec.attention, s[2], s[3], override_);
}

ParameterStore extract_weights(const NetworkSpec& spec, const ParameterStore& store) {
  ParameterStore out;
  for (int i = 0; i < 3; ++i) copy_conv(store, out, stem_prefix(i));
  // A cell reached by several paths is stored once, at its widest use.
  std::map<std::string, std::pair<OpKind, std::size_t>> cells;
  auto take = [&](const LayerSpec& l, int index) {
    const std::size_t hidden = static_cast<std::size_t>(spec.base_width * l.expansion);
    auto& c = cells[cell_prefix(l.rate, index, l.op)];
    c = {l.op, std::max(c.second, hidden)};
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) take(spec.layers[i], static_cast<int>(i));
  for (const auto& br : spec.branches) {
    for (std::size_t j = 0; j < br.layers.size(); ++j) {
      take(br.layers[j], spec.branch_layer_index(static_cast<int>(j)));
    }
  }
  for (const auto& [prefix, c] : cells) extract_cell(store, out, prefix, c.first, c.second);
  copy_conv(store, out, "head.fuse");
  copy_conv(store, out, "head.cls");
  if (spec.attention) {
    for (const auto& p : store) {
      if (p.first.rfind("head.att.", 0) == 0) copy_param(store, out, p.first);
    }
  }
  out.set_origin(store.origin());
  return out;
}

}  // namespace mfs
