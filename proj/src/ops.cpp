// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include "mfs/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mfs {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, dim = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
  if (axis < 0 || static_cast<std::size_t>(axis) >= shape.size()) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.dim = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

struct ConvGeometry {
  std::size_t n, ci, h, w, co, k, ho, wo;
  int stride, pad;

  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride - g.pad + static_cast<long>(ki);
          double* dst = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + ih) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride - g.pad + static_cast<long>(kj);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.w)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride - g.pad + static_cast<long>(ki);
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          double* dst = dx + (c * g.h + ih) * g.w;
          const double* src = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride - g.pad + static_cast<long>(kj);
            if (iw >= 0 && iw < static_cast<long>(g.w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void check_conv_args(const Tensor& x, const Tensor& k, int stride, int padding,
                     bool depthwise) {
  const char* op = depthwise ? "depthwise_conv2d" : "conv2d";
  require_rank(x, 4, op);
  require_rank(k, 4, op);
  const std::size_t kernel_in = depthwise ? x.dim(1) : k.dim(1);
  const bool channels_ok = depthwise ? (k.dim(0) == x.dim(1) && k.dim(1) == 1)
                                     : (k.dim(1) == x.dim(1));
  if (!channels_ok || kernel_in == 0) {
    throw std::invalid_argument(std::string(op) + ": input " + shape_str(x.shape()) +
                                " incompatible with kernel " + shape_str(k.shape()));
  }
  if (k.dim(2) != k.dim(3) || k.dim(2) % 2 == 0) {
    throw std::invalid_argument(std::string(op) + ": kernel must be square with odd size, got " +
                                shape_str(k.shape()));
  }
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument(std::string(op) + ": stride must be 1 or 2");
  }
  if (padding < 0 || x.dim(2) + 2 * padding < k.dim(2) || x.dim(3) + 2 * padding < k.dim(3)) {
    throw std::invalid_argument(std::string(op) + ": kernel " + shape_str(k.shape()) +
                                " larger than padded input " + shape_str(x.shape()));
  }
}

ConvGeometry geometry(const Tensor& x, const Tensor& k, int stride, int padding) {
  ConvGeometry g{};
  g.n = x.dim(0);
  g.ci = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.co = k.dim(0);
  g.k = k.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;
  return g;
}

// Half-pixel bilinear sampling table for one axis.
struct ResizeAxis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

ResizeAxis resize_axis(std::size_t in, std::size_t out) {
  ResizeAxis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    a.lo[o] = lo;
    a.hi[o] = lo + (lo < in - 1 ? 1 : 0);
    a.frac[o] = src - static_cast<double>(lo);
  }
  return a;
}

}  // namespace

Expr conv2d(const Expr& x, const Expr& kernel, int stride, int padding) {
  const Tensor& X = x.value();
  const Tensor& K = kernel.value();
  check_conv_args(X, K, stride, padding, false);
  const ConvGeometry g = geometry(X, K, stride, padding);
  const std::size_t rows = g.ci * g.k * g.k;
  const std::size_t plane = g.ho * g.wo;

  Tensor out({g.n, g.co, g.ho, g.wo});
  std::vector<double> cols(g.pointwise() ? 0 : rows * plane);
  ConstMapMat wmat(K.ptr(), g.co, rows);
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* xn = X.ptr() + n * g.ci * g.h * g.w;
    const double* c = xn;
    if (!g.pointwise()) {
      im2col(xn, g, cols.data());
      c = cols.data();
    }
    MapMat(out.ptr() + n * g.co * plane, g.co, plane).noalias() =
        wmat * ConstMapMat(c, rows, plane);
  }

  const Tensor* xp = &X;
  const Tensor* kp = &K;
  return x.graph()->record(std::move(out), {x, kernel},
                           [xp, kp, g](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    const std::size_t rows = g.ci * g.k * g.k;
    const std::size_t plane = g.ho * g.wo;
    std::vector<double> cols(g.pointwise() ? 0 : rows * plane);
    ConstMapMat wmat(kp->ptr(), g.co, rows);
    for (std::size_t n = 0; n < g.n; ++n) {
      ConstMapMat dy(dout.ptr() + n * g.co * plane, g.co, plane);
      const double* xn = xp->ptr() + n * g.ci * g.h * g.w;
      if (din[1]) {
        const double* c = xn;
        if (!g.pointwise()) {
          im2col(xn, g, cols.data());
          c = cols.data();
        }
        MapMat(din[1]->ptr(), g.co, rows).noalias() += dy * ConstMapMat(c, rows, plane).transpose();
      }
      if (din[0]) {
        double* dxn = din[0]->ptr() + n * g.ci * g.h * g.w;
        if (g.pointwise()) {
          MapMat(dxn, rows, plane).noalias() += wmat.transpose() * dy;
        } else {
          MapMat(cols.data(), rows, plane).noalias() = wmat.transpose() * dy;
          col2im_add(cols.data(), g, dxn);
        }
      }
    }
  });
}

Expr depthwise_conv2d(const Expr& x, const Expr& kernel, int stride, int padding) {
  const Tensor& X = x.value();
  const Tensor& K = kernel.value();
  check_conv_args(X, K, stride, padding, true);
  const ConvGeometry g = geometry(X, K, stride, padding);
  Tensor out({g.n, g.ci, g.ho, g.wo});

  auto sweep = [g](auto&& visit) {
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t c = 0; c < g.ci; ++c)
        for (std::size_t oh = 0; oh < g.ho; ++oh)
          for (std::size_t ow = 0; ow < g.wo; ++ow)
            for (std::size_t ki = 0; ki < g.k; ++ki) {
              const long ih = static_cast<long>(oh) * g.stride - g.pad + static_cast<long>(ki);
              if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
              for (std::size_t kj = 0; kj < g.k; ++kj) {
                const long iw = static_cast<long>(ow) * g.stride - g.pad + static_cast<long>(kj);
                if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
                const std::size_t xi = ((n * g.ci + c) * g.h + ih) * g.w + iw;
                const std::size_t ki_idx = (c * g.k + ki) * g.k + kj;
                const std::size_t oi = ((n * g.ci + c) * g.ho + oh) * g.wo + ow;
                visit(xi, ki_idx, oi);
              }
            }
  };
  sweep([&](std::size_t xi, std::size_t ki, std::size_t oi) { out[oi] += X[xi] * K[ki]; });

  const Tensor* xp = &X;
  const Tensor* kp = &K;
  return x.graph()->record(std::move(out), {x, kernel},
                           [xp, kp, sweep](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    sweep([&](std::size_t xi, std::size_t ki, std::size_t oi) {
      if (din[0]) (*din[0])[xi] += dout[oi] * (*kp)[ki];
      if (din[1]) (*din[1])[ki] += dout[oi] * (*xp)[xi];
    });
  });
}

Expr add_bias(const Expr& x, const Expr& bias) {
  const Tensor& X = x.value();
  const Tensor& B = bias.value();
  require_rank(X, 4, "add_bias");
  if (B.size() != X.dim(1)) {
    throw std::invalid_argument("add_bias: bias " + shape_str(B.shape()) +
                                " does not match channels of " + shape_str(X.shape()));
  }
  const std::size_t n = X.dim(0), c = X.dim(1), plane = X.dim(2) * X.dim(3);
  Tensor out = X;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = out.ptr() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] += B[ch];
    }
  return x.graph()->record(std::move(out), {x, bias},
                           [n, c, plane](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    if (din[0]) {
      for (std::size_t i = 0; i < dout.size(); ++i) (*din[0])[i] += dout[i];
    }
    if (din[1]) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* p = dout.ptr() + (i * c + ch) * plane;
          double s = 0;
          for (std::size_t j = 0; j < plane; ++j) s += p[j];
          (*din[1])[ch] += s;
        }
    }
  });
}

Expr global_avg_pool(const Expr& x) {
  const Tensor& X = x.value();
  require_rank(X, 4, "global_avg_pool");
  const std::size_t n = X.dim(0), c = X.dim(1), plane = X.dim(2) * X.dim(3);
  if (plane == 0) throw std::invalid_argument("global_avg_pool: empty spatial extent");
  Tensor out({n, c, 1, 1});
  for (std::size_t i = 0; i < n * c; ++i) {
    const double* p = X.ptr() + i * plane;
    double s = 0;
    for (std::size_t j = 0; j < plane; ++j) s += p[j];
    out[i] = s / static_cast<double>(plane);
  }
  return x.graph()->record(std::move(out), {x},
                           [plane](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < dout.size(); ++i) {
      double* p = din[0]->ptr() + i * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] += dout[i] * inv;
    }
  });
}

Expr relu(const Expr& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0 ? v : 0.0;
  const Tensor* xp = &x.value();
  return x.graph()->record(std::move(out), {x},
                           [xp](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t i = 0; i < dout.size(); ++i)
      if ((*xp)[i] > 0) (*din[0])[i] += dout[i];
  });
}

Expr sigmoid(const Expr& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  return x.graph()->record(std::move(out), {x},
                           [](const Tensor& y, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t i = 0; i < dout.size(); ++i) (*din[0])[i] += dout[i] * y[i] * (1.0 - y[i]);
  });
}

Expr add(const Expr& a, const Expr& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.graph()->record(std::move(out), {a, b},
                           [](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (auto* d : din) {
      if (!d) continue;
      for (std::size_t i = 0; i < dout.size(); ++i) (*d)[i] += dout[i];
    }
  });
}

Expr sub(const Expr& a, const Expr& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.graph()->record(std::move(out), {a, b},
                           [](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t i = 0; i < dout.size(); ++i) {
      if (din[0]) (*din[0])[i] += dout[i];
      if (din[1]) (*din[1])[i] -= dout[i];
    }
  });
}

Expr mul(const Expr& a, const Expr& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Tensor* ap = &a.value();
  const Tensor* bp = &b.value();
  return a.graph()->record(std::move(out), {a, b},
                           [ap, bp](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t i = 0; i < dout.size(); ++i) {
      if (din[0]) (*din[0])[i] += dout[i] * (*bp)[i];
      if (din[1]) (*din[1])[i] += dout[i] * (*ap)[i];
    }
  });
}

Expr scale(const Expr& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return x.graph()->record(std::move(out), {x},
                           [factor](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t i = 0; i < dout.size(); ++i) (*din[0])[i] += dout[i] * factor;
  });
}

Expr scale(const Expr& x, const Expr& factor) {
  if (factor.value().size() != 1) {
    throw std::invalid_argument("scale: factor must hold one value, got " +
                                shape_str(factor.shape()));
  }
  const double f = factor.value()[0];
  Tensor out = x.value();
  for (auto& v : out.data()) v *= f;
  const Tensor* xp = &x.value();
  return x.graph()->record(std::move(out), {x, factor},
                           [xp, f](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    if (din[0]) {
      for (std::size_t i = 0; i < dout.size(); ++i) (*din[0])[i] += dout[i] * f;
    }
    if (din[1]) {
      double s = 0;
      for (std::size_t i = 0; i < dout.size(); ++i) s += dout[i] * (*xp)[i];
      (*din[1])[0] += s;
    }
  });
}

Expr scale_channels(const Expr& x, const Expr& s) {
  const Tensor& X = x.value();
  const Tensor& S = s.value();
  require_rank(X, 4, "scale_channels");
  if (S.shape() != Shape{X.dim(0), X.dim(1), 1, 1}) {
    throw std::invalid_argument("scale_channels: scale " + shape_str(S.shape()) +
                                " does not match " + shape_str(X.shape()));
  }
  const std::size_t groups = X.dim(0) * X.dim(1), plane = X.dim(2) * X.dim(3);
  Tensor out = X;
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    double* p = out.ptr() + gidx * plane;
    for (std::size_t j = 0; j < plane; ++j) p[j] *= S[gidx];
  }
  const Tensor* xp = &X;
  const Tensor* sp = &S;
  return x.graph()->record(std::move(out), {x, s},
                           [xp, sp, groups, plane](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
      const double* dy = dout.ptr() + gidx * plane;
      const double* xv = xp->ptr() + gidx * plane;
      if (din[0]) {
        double* dx = din[0]->ptr() + gidx * plane;
        for (std::size_t j = 0; j < plane; ++j) dx[j] += dy[j] * (*sp)[gidx];
      }
      if (din[1]) {
        double acc = 0;
        for (std::size_t j = 0; j < plane; ++j) acc += dy[j] * xv[j];
        (*din[1])[gidx] += acc;
      }
    }
  });
}

Expr matvec(const Expr& w, const Expr& v) {
  const Tensor& W = w.value();
  const Tensor& V = v.value();
  require_rank(W, 2, "matvec");
  const bool image_like = V.rank() == 4;
  if (!(V.rank() == 2 || (image_like && V.dim(2) == 1 && V.dim(3) == 1)) ||
      V.dim(1) != W.dim(1)) {
    throw std::invalid_argument("matvec: matrix " + shape_str(W.shape()) +
                                " cannot apply to " + shape_str(V.shape()));
  }
  const std::size_t n = V.dim(0), m = W.dim(0), k = W.dim(1);
  Tensor out(image_like ? Shape{n, m, 1, 1} : Shape{n, m});
  ConstMapMat wm(W.ptr(), m, k);
  // Rows of V are samples: out = V · Wᵀ.
  MapMat(out.ptr(), n, m).noalias() = ConstMapMat(V.ptr(), n, k) * wm.transpose();
  const Tensor* wp = &W;
  const Tensor* vp = &V;
  return w.graph()->record(std::move(out), {w, v},
                           [wp, vp, n, m, k](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    ConstMapMat dy(dout.ptr(), n, m);
    if (din[0]) MapMat(din[0]->ptr(), m, k).noalias() += dy.transpose() * ConstMapMat(vp->ptr(), n, k);
    if (din[1]) MapMat(din[1]->ptr(), n, k).noalias() += dy * ConstMapMat(wp->ptr(), m, k);
  });
}

Expr softmax(const Expr& x, int axis) {
  const Tensor& X = x.value();
  const AxisSplit s = split_axis(X.shape(), axis, "softmax");
  Tensor out(X.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.dim * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t d = 0; d < s.dim; ++d) mx = std::max(mx, X[base + d * s.inner]);
      double z = 0;
      for (std::size_t d = 0; d < s.dim; ++d) {
        const double e = std::exp(X[base + d * s.inner] - mx);
        out[base + d * s.inner] = e;
        z += e;
      }
      for (std::size_t d = 0; d < s.dim; ++d) out[base + d * s.inner] /= z;
    }
  return x.graph()->record(std::move(out), {x},
                           [s](const Tensor& y, const Tensor& dout, std::vector<Tensor*>& din) {
    const Tensor* yp = &y;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.dim * s.inner + in;
        double dot = 0;
        for (std::size_t d = 0; d < s.dim; ++d)
          dot += dout[base + d * s.inner] * (*yp)[base + d * s.inner];
        for (std::size_t d = 0; d < s.dim; ++d) {
          const std::size_t i = base + d * s.inner;
          (*din[0])[i] += (*yp)[i] * (dout[i] - dot);
        }
      }
  });
}

Expr log_softmax(const Expr& x, int axis) {
  const Tensor& X = x.value();
  const AxisSplit s = split_axis(X.shape(), axis, "log_softmax");
  Tensor out(X.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.dim * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t d = 0; d < s.dim; ++d) mx = std::max(mx, X[base + d * s.inner]);
      double z = 0;
      for (std::size_t d = 0; d < s.dim; ++d) z += std::exp(X[base + d * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t d = 0; d < s.dim; ++d)
        out[base + d * s.inner] = X[base + d * s.inner] - lse;
    }
  return x.graph()->record(std::move(out), {x},
                           [s](const Tensor& y, const Tensor& dout, std::vector<Tensor*>& din) {
    const Tensor* yp = &y;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.dim * s.inner + in;
        double total = 0;
        for (std::size_t d = 0; d < s.dim; ++d) total += dout[base + d * s.inner];
        for (std::size_t d = 0; d < s.dim; ++d) {
          const std::size_t i = base + d * s.inner;
          (*din[0])[i] += dout[i] - std::exp((*yp)[i]) * total;
        }
      }
  });
}

Expr resize_to(const Expr& x, std::size_t height, std::size_t width) {
  const Tensor& X = x.value();
  require_rank(X, 4, "resize");
  if (height == 0 || width == 0 || X.dim(2) == 0 || X.dim(3) == 0) {
    throw std::invalid_argument("resize: empty extent for " + shape_str(X.shape()));
  }
  if (height == X.dim(2) && width == X.dim(3)) {
    return x.graph()->record(X, {x}, [](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
      for (std::size_t i = 0; i < dout.size(); ++i) (*din[0])[i] += dout[i];
    });
  }
  const std::size_t groups = X.dim(0) * X.dim(1), ih = X.dim(2), iw = X.dim(3);
  auto ay = std::make_shared<ResizeAxis>(resize_axis(ih, height));
  auto ax = std::make_shared<ResizeAxis>(resize_axis(iw, width));
  Tensor out({X.dim(0), X.dim(1), height, width});
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const double* src = X.ptr() + gi * ih * iw;
    double* dst = out.ptr() + gi * height * width;
    for (std::size_t oy = 0; oy < height; ++oy) {
      const double fy = ay->frac[oy];
      const double* r0 = src + ay->lo[oy] * iw;
      const double* r1 = src + ay->hi[oy] * iw;
      for (std::size_t ox = 0; ox < width; ++ox) {
        const double fx = ax->frac[ox];
        const std::size_t x0 = ax->lo[ox], x1 = ax->hi[ox];
        dst[oy * width + ox] = (1 - fy) * ((1 - fx) * r0[x0] + fx * r0[x1]) +
                               fy * ((1 - fx) * r1[x0] + fx * r1[x1]);
      }
    }
  }
  return x.graph()->record(std::move(out), {x},
                           [ay, ax, groups, ih, iw, height, width](
                               const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      double* dsrc = din[0]->ptr() + gi * ih * iw;
      const double* dy = dout.ptr() + gi * height * width;
      for (std::size_t oy = 0; oy < height; ++oy) {
        const double fy = ay->frac[oy];
        double* r0 = dsrc + ay->lo[oy] * iw;
        double* r1 = dsrc + ay->hi[oy] * iw;
        for (std::size_t ox = 0; ox < width; ++ox) {
          const double fx = ax->frac[ox];
          const std::size_t x0 = ax->lo[ox], x1 = ax->hi[ox];
          const double g = dy[oy * width + ox];
          r0[x0] += g * (1 - fy) * (1 - fx);
          r0[x1] += g * (1 - fy) * fx;
          r1[x0] += g * fy * (1 - fx);
          r1[x1] += g * fy * fx;
        }
      }
    }
  });
}

Expr bilinear_resize(const Expr& x, double scale) {
  require_rank(x.value(), 4, "bilinear_resize");
  const std::size_t h = x.value().dim(2), w = x.value().dim(3);
  if (scale == 1.0) return resize_to(x, h, w);
  if (scale == 2.0) return resize_to(x, 2 * h, 2 * w);
  if (scale == 0.5) return resize_to(x, (h + 1) / 2, (w + 1) / 2);
  throw std::invalid_argument("bilinear_resize: scale must be 0.5, 1 or 2, got " +
                              std::to_string(scale));
}

Expr concat(const std::vector<Expr>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  Shape shape = xs[0].shape();
  split_axis(shape, axis, "concat");
  std::size_t total = 0;
  for (const auto& e : xs) {
    Shape other = e.shape();
    if (other.size() != shape.size()) {
      throw std::invalid_argument("concat: rank mismatch " + shape_str(shape) + " vs " +
                                  shape_str(other));
    }
    total += other[axis];
    other[axis] = shape[axis];
    if (other != shape) {
      throw std::invalid_argument("concat: incompatible shapes " + shape_str(shape) + " and " +
                                  shape_str(e.shape()));
    }
  }
  shape[axis] = total;
  const AxisSplit s = split_axis(shape, axis, "concat");
  Tensor out(shape);
  std::vector<std::size_t> dims;
  std::size_t offset = 0;
  for (const auto& e : xs) {
    const std::size_t d = e.shape()[axis];
    dims.push_back(d);
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = e.value().ptr() + o * d * s.inner;
      std::copy(src, src + d * s.inner, out.ptr() + (o * s.dim + offset) * s.inner);
    }
    offset += d;
  }
  return xs[0].graph()->record(std::move(out), xs,
                               [s, dims](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      const std::size_t d = dims[k];
      if (din[k]) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = dout.ptr() + (o * s.dim + offset) * s.inner;
          double* dst = din[k]->ptr() + o * d * s.inner;
          for (std::size_t i = 0; i < d * s.inner; ++i) dst[i] += src[i];
        }
      }
      offset += d;
    }
  });
}

Expr narrow(const Expr& x, int axis, std::size_t start, std::size_t length) {
  const Tensor& X = x.value();
  const AxisSplit s = split_axis(X.shape(), axis, "narrow");
  if (start + length > s.dim || length == 0) {
    throw std::invalid_argument("narrow: range [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") outside axis " +
                                std::to_string(axis) + " of " + shape_str(X.shape()));
  }
  if (start == 0 && length == s.dim) {
    return x.graph()->record(X, {x}, [](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
      for (std::size_t i = 0; i < dout.size(); ++i) (*din[0])[i] += dout[i];
    });
  }
  Shape shape = X.shape();
  shape[axis] = length;
  Tensor out(shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* src = X.ptr() + (o * s.dim + start) * s.inner;
    std::copy(src, src + length * s.inner, out.ptr() + o * length * s.inner);
  }
  return x.graph()->record(std::move(out), {x},
                           [s, start, length](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = dout.ptr() + o * length * s.inner;
      double* dst = din[0]->ptr() + (o * s.dim + start) * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Expr sum(const Expr& x) {
  double s = 0;
  for (double v : x.value().data()) s += v;
  return x.graph()->record(Tensor::scalar(s), {x},
                           [](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (auto& v : din[0]->data()) v += dout[0];
  });
}

Expr mean(const Expr& x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw std::invalid_argument("mean of an empty tensor");
  return scale(sum(x), 1.0 / n);
}

Expr weighted_sum(const std::vector<Expr>& xs, const Expr& weights) {
  if (xs.empty() || weights.value().size() != xs.size()) {
    throw std::invalid_argument("weighted_sum: " + std::to_string(xs.size()) + " terms but " +
                                std::to_string(weights.value().size()) + " weights");
  }
  for (const auto& e : xs) require_same_shape(xs[0].value(), e.value(), "weighted_sum");
  const Tensor& w = weights.value();
  Tensor out(xs[0].shape());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& xk = xs[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[k] * xk[i];
  }
  std::vector<const Tensor*> values;
  for (const auto& e : xs) values.push_back(&e.value());
  const Tensor* wp = &w;
  std::vector<Expr> inputs = xs;
  inputs.push_back(weights);
  return weights.graph()->record(std::move(out), inputs,
                                 [values, wp](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    const std::size_t k_count = values.size();
    for (std::size_t k = 0; k < k_count; ++k) {
      if (din[k]) {
        for (std::size_t i = 0; i < dout.size(); ++i) (*din[k])[i] += (*wp)[k] * dout[i];
      }
      if (din[k_count]) {
        double acc = 0;
        for (std::size_t i = 0; i < dout.size(); ++i) acc += dout[i] * (*values[k])[i];
        (*din[k_count])[k] += acc;
      }
    }
  });
}

Expr dot(const Expr& x, const Tensor& coeffs) {
  if (coeffs.size() != x.value().size()) {
    throw std::invalid_argument("dot: " + shape_str(x.shape()) + " vs coefficients " +
                                shape_str(coeffs.shape()));
  }
  double s = 0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) s += x.value()[i] * coeffs[i];
  return x.graph()->record(Tensor::scalar(s), {x},
                           [coeffs](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    for (std::size_t i = 0; i < coeffs.size(); ++i) (*din[0])[i] += dout[0] * coeffs[i];
  });
}

Expr element(const Expr& x, std::size_t index) {
  if (index >= x.value().size()) {
    throw std::invalid_argument("element: index " + std::to_string(index) +
                                " outside " + shape_str(x.shape()));
  }
  return x.graph()->record(Tensor::scalar(x.value()[index]), {x},
                           [index](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
    (*din[0])[index] += dout[0];
  });
}

Expr stop_gradient(const Expr& x) { return x.graph()->constant(x.value()); }

Expr irnn_sweep(const Expr& x, const Expr& recurrent, Direction dir) {
  const Tensor& X = x.value();
  const Tensor& Wr = recurrent.value();
  require_rank(X, 4, "irnn_sweep");
  if (Wr.size() != X.dim(1)) {
    throw std::invalid_argument("irnn_sweep: recurrent weights " + shape_str(Wr.shape()) +
                                " do not match channels of " + shape_str(X.shape()));
  }
  const std::size_t n = X.dim(0), c = X.dim(1), h = X.dim(2), w = X.dim(3);
  const bool horizontal = dir == Direction::kRight || dir == Direction::kLeft;
  const bool reverse = dir == Direction::kLeft || dir == Direction::kUp;
  const std::size_t lines = horizontal ? h : w;
  const std::size_t length = horizontal ? w : h;
  const long step = (horizontal ? 1L : static_cast<long>(w)) * (reverse ? -1 : 1);

  // Visits every line as (channel, offset of the first element in sweep order).
  auto for_each_line = [=](auto&& visit) {
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t ci = 0; ci < c; ++ci) {
        const std::size_t base = (ni * c + ci) * h * w;
        for (std::size_t li = 0; li < lines; ++li) {
          std::size_t first;
          if (horizontal) {
            first = base + li * w + (reverse ? w - 1 : 0);
          } else {
            first = base + li + (reverse ? (h - 1) * w : 0);
          }
          visit(ci, first);
        }
      }
  };

  Tensor out(X.shape());
  for_each_line([&](std::size_t ci, std::size_t first) {
    double hprev = 0;
    long idx = static_cast<long>(first);
    for (std::size_t t = 0; t < length; ++t, idx += step) {
      const double pre = Wr[ci] * hprev + X[idx];
      hprev = pre > 0 ? pre : 0.0;
      out[idx] = hprev;
    }
  });

  const Tensor* wp = &Wr;
  return x.graph()->record(std::move(out), {x, recurrent},
                           [=](const Tensor& y, const Tensor& dout, std::vector<Tensor*>& din) {
    const Tensor* yp = &y;
    for_each_line([&](std::size_t ci, std::size_t first) {
      const long last = static_cast<long>(first) + step * static_cast<long>(length - 1);
      double carry = 0;
      long idx = last;
      for (std::size_t t = length; t-- > 0; idx -= step) {
        const double gsum = dout[idx] + carry;
        const double dpre = (*yp)[idx] > 0 ? gsum : 0.0;
        if (din[0]) (*din[0])[idx] += dpre;
        const double hprev = t > 0 ? (*yp)[idx - step] : 0.0;
        if (din[1]) (*din[1])[ci] += dpre * hprev;
        carry = dpre * (*wp)[ci];
      }
    });
  });
}

Expr softmax_cross_entropy(const Expr& logits, std::span<const int> labels,
                           int ignore_index) {
  const Tensor& Z = logits.value();
  require_rank(Z, 4, "softmax_cross_entropy");
  const std::size_t n = Z.dim(0), k = Z.dim(1), plane = Z.dim(2) * Z.dim(3);
  if (labels.size() != n * plane) {
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for logits " + shape_str(Z.shape()));
  }
  auto probs = std::make_shared<Tensor>(Z.shape());
  std::vector<int> lab(labels.begin(), labels.end());
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t base = ni * k * plane + p;
      double mx = -INFINITY;
      for (std::size_t ci = 0; ci < k; ++ci) mx = std::max(mx, Z[base + ci * plane]);
      double zsum = 0;
      for (std::size_t ci = 0; ci < k; ++ci) {
        const double e = std::exp(Z[base + ci * plane] - mx);
        (*probs)[base + ci * plane] = e;
        zsum += e;
      }
      for (std::size_t ci = 0; ci < k; ++ci) (*probs)[base + ci * plane] /= zsum;
      const int t = lab[ni * plane + p];
      if (t == ignore_index) continue;
      if (t < 0 || static_cast<std::size_t>(t) >= k) {
        throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(t) +
                                    " outside [0, " + std::to_string(k) + ")");
      }
      total += mx + std::log(zsum) - Z[base + t * plane];
      ++counted;
    }
  const double inv = counted ? 1.0 / static_cast<double>(counted) : 0.0;
  return logits.graph()->record(
      Tensor::scalar(total * inv), {logits},
      [probs, lab, ignore_index, n, k, plane, inv](const Tensor&, const Tensor& dout, std::vector<Tensor*>& din) {
        const double g = dout[0] * inv;
        for (std::size_t ni = 0; ni < n; ++ni)
          for (std::size_t p = 0; p < plane; ++p) {
            const int t = lab[ni * plane + p];
            if (t == ignore_index) continue;
            const std::size_t base = ni * k * plane + p;
            for (std::size_t ci = 0; ci < k; ++ci) {
              const double target = static_cast<int>(ci) == t ? 1.0 : 0.0;
              (*din[0])[base + ci * plane] += g * ((*probs)[base + ci * plane] - target);
            }
          }
      });
}

}  // namespace mfs
