// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "gemm.hpp"
#include "erde/error.hpp"
#include "erde/rng.hpp"

namespace erde::ad {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

void check_finite(const char* op, const Tensor& t) {
  if (!strict_finite() || !t.defined()) return;
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": non-finite input value");
  }
}

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got shape " + to_string(t.shape()));
  }
}

/// Wires `out` onto the active tape if any input needs a gradient.
template <typename Rule>
void attach(const char* op, Tensor& out, std::initializer_list<const Tensor*> inputs, Rule&& rule) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  bool any = false;
  std::vector<NodePtr> nodes;
  for (const Tensor* t : inputs) {
    if (t == nullptr || !t->defined()) continue;
    nodes.push_back(t->node());
    any = any || t->requires_grad();
  }
  if (!any) return;
  out.set_requires_grad(true);
  tape->record(op, std::move(nodes), out.node(), std::forward<Rule>(rule));
}

/// Gradient buffer of an input node, or nullptr if it does not need one.
double* grad_of(const NodePtr& node) {
  if (!node->requires_grad) return nullptr;
  if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
  return node->grad.data();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  check_finite("add", a);
  check_finite("add", b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor y(a.shape(), std::move(out));
  attach("add", y, {&a, &b}, [an = a.node(), bn = b.node(), yn = y.node()] {
    const auto& g = yn->grad;
    if (double* ga = grad_of(an)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = grad_of(bn)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  check_finite("sub", a);
  check_finite("sub", b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor y(a.shape(), std::move(out));
  attach("sub", y, {&a, &b}, [an = a.node(), bn = b.node(), yn = y.node()] {
    const auto& g = yn->grad;
    if (double* ga = grad_of(an)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = grad_of(bn)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  check_finite("mul", a);
  check_finite("mul", b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor y(a.shape(), std::move(out));
  attach("mul", y, {&a, &b}, [an = a.node(), bn = b.node(), yn = y.node()] {
    const auto& g = yn->grad;
    if (double* ga = grad_of(an)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
    if (double* gb = grad_of(bn)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
  });
  return y;
}

Tensor add_scalar(const Tensor& x, double c) {
  check_finite("add_scalar", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + c;
  Tensor y(x.shape(), std::move(out));
  attach("add_scalar", y, {&x}, [xn = x.node(), yn = y.node()] {
    const auto& g = yn->grad;
    if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return y;
}

Tensor mul_scalar(const Tensor& x, double c) {
  check_finite("mul_scalar", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * c;
  Tensor y(x.shape(), std::move(out));
  attach("mul_scalar", y, {&x}, [xn = x.node(), yn = y.node(), c] {
    const auto& g = yn->grad;
    if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
  });
  return y;
}

Tensor relu(const Tensor& x) {
  check_finite("relu", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  Tensor y(x.shape(), std::move(out));
  attach("relu", y, {&x}, [xn = x.node(), yn = y.node()] {
    const auto& g = yn->grad;
    if (double* gx = grad_of(xn)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xn->data[i] > 0.0) gx[i] += g[i];
      }
    }
  });
  return y;
}

Tensor log(const Tensor& x) {
  check_finite("log", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x[i]);
  Tensor y(x.shape(), std::move(out));
  attach("log", y, {&x}, [xn = x.node(), yn = y.node()] {
    const auto& g = yn->grad;
    if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xn->data[i];
  });
  return y;
}

Tensor exp(const Tensor& x) {
  check_finite("exp", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
  Tensor y(x.shape(), std::move(out));
  attach("exp", y, {&x}, [xn = x.node(), yn = y.node()] {
    const auto& g = yn->grad;
    if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yn->data[i];
  });
  return y;
}

Tensor sum(const Tensor& x) {
  check_finite("sum", x);
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = Tensor::scalar(s);
  attach("sum", y, {&x}, [xn = x.node(), yn = y.node()] {
    const double g = yn->grad[0];
    if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += g;
  });
  return y;
}

Tensor mean(const Tensor& x) {
  check_finite("mean", x);
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.size());
  Tensor y = Tensor::scalar(s / n);
  attach("mean", y, {&x}, [xn = x.node(), yn = y.node(), n] {
    const double g = yn->grad[0] / n;
    if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += g;
  });
  return y;
}

Tensor sum_rows(const Tensor& x) {
  require_rank("sum_rows", x, 2);
  check_finite("sum_rows", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c];
    out[r] = s;
  }
  Tensor y({rows}, std::move(out));
  attach("sum_rows", y, {&x}, [xn = x.node(), yn = y.node(), rows, cols] {
    if (double* gx = grad_of(xn)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += yn->grad[r];
      }
    }
  });
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    shape_fail("reshape", "cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  attach("reshape", y, {&x}, [xn = x.node(), yn = y.node()] {
    if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < yn->grad.size(); ++i) gx[i] += yn->grad[i];
  });
  return y;
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) shape_fail("flatten", "needs a leading batch axis, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0);
  return reshape(x, {n, x.size() / n});
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    shape_fail("matmul", "inner dimensions differ: " + to_string(a.shape()) + " * " + to_string(b.shape()));
  }
  check_finite("matmul", a);
  check_finite("matmul", b);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  Tensor y({m, n}, std::move(out));
  attach("matmul", y, {&a, &b}, [an = a.node(), bn = b.node(), yn = y.node(), m, k, n] {
    const double* g = yn->grad.data();
    if (double* ga = grad_of(an)) gemm_nt(m, k, n, g, bn->data.data(), ga);
    if (double* gb = grad_of(bn)) gemm_tn(k, n, m, an->data.data(), g, gb);
  });
  return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  const std::size_t batch = x.dim(0), in = x.dim(1), out_features = weight.dim(0);
  if (weight.dim(1) != in) {
    shape_fail("linear", "input has " + std::to_string(in) + " features but weight is " + to_string(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_features}) {
    shape_fail("linear", "bias shape " + to_string(bias.shape()) + " does not match " + std::to_string(out_features) +
                             " outputs");
  }
  check_finite("linear", x);
  check_finite("linear", weight);
  check_finite("linear", bias);
  std::vector<double> out(batch * out_features, 0.0);
  gemm_nt(batch, out_features, in, x.data().data(), weight.data().data(), out.data());
  if (bias.defined()) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < out_features; ++o) out[b * out_features + o] += bias[o];
    }
  }
  Tensor y({batch, out_features}, std::move(out));
  NodePtr bnode = bias.defined() ? bias.node() : nullptr;
  attach("linear", y, {&x, &weight, &bias},
         [xn = x.node(), wn = weight.node(), bnode, yn = y.node(), batch, in, out_features] {
           const double* g = yn->grad.data();
           if (double* gx = grad_of(xn)) gemm_nn(batch, in, out_features, g, wn->data.data(), gx);
           if (double* gw = grad_of(wn)) gemm_tn(out_features, in, batch, g, xn->data.data(), gw);
           if (bnode) {
             if (double* gb = grad_of(bnode)) {
               for (std::size_t b = 0; b < batch; ++b) {
                 for (std::size_t o = 0; o < out_features; ++o) gb[o] += g[b * out_features + o];
               }
             }
           }
         });
  return y;
}

namespace {

struct ConvGeometry {
  std::size_t n, c_in, h, w, c_out, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c_in * kh * kw; }
  std::size_t positions() const { return oh * ow; }
};

void im2col(const ConvGeometry& g, const double* image, double* col) {
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.ow + ox] = inside ? image[(c * g.h + static_cast<std::size_t>(iy)) * g.w +
                                                 static_cast<std::size_t>(ix)]
                                         : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* image) {
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            image[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] +=
                row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dAttrs attrs) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  if (attrs.stride == 0) shape_fail("conv2d", "stride must be positive");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c_in = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.c_out = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = attrs.stride;
  g.pad = attrs.padding;
  if (weight.dim(1) != g.c_in) {
    shape_fail("conv2d", "input has " + std::to_string(g.c_in) + " channels but kernel is " + to_string(weight.shape()));
  }
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    shape_fail("conv2d", "kernel " + to_string(weight.shape()) + " larger than padded input " + to_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{g.c_out}) {
    shape_fail("conv2d", "bias shape " + to_string(bias.shape()) + " does not match " + std::to_string(g.c_out) +
                             " output channels");
  }
  check_finite("conv2d", x);
  check_finite("conv2d", weight);
  check_finite("conv2d", bias);
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  const std::size_t patch = g.patch(), positions = g.positions();
  const std::size_t in_image = g.c_in * g.h * g.w, out_image = g.c_out * positions;
  const bool record = Tape::active() != nullptr &&
                      (x.requires_grad() || weight.requires_grad() || (bias.defined() && bias.requires_grad()));

  auto cols = std::make_shared<std::vector<double>>(record ? g.n * patch * positions : patch * positions);
  std::vector<double> out(g.n * out_image, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    double* col = cols->data() + (record ? i * patch * positions : 0);
    im2col(g, x.data().data() + i * in_image, col);
    double* y = out.data() + i * out_image;
    gemm_nn(g.c_out, positions, patch, weight.data().data(), col, y);
    if (bias.defined()) {
      for (std::size_t o = 0; o < g.c_out; ++o) {
        const double b = bias[o];
        for (std::size_t p = 0; p < positions; ++p) y[o * positions + p] += b;
      }
    }
  }
  Tensor y({g.n, g.c_out, g.oh, g.ow}, std::move(out));
  if (!record) return y;

  NodePtr bnode = bias.defined() ? bias.node() : nullptr;
  attach("conv2d", y, {&x, &weight, &bias}, [xn = x.node(), wn = weight.node(), bnode, yn = y.node(), cols, g] {
    const std::size_t patch = g.patch(), positions = g.positions();
    const std::size_t in_image = g.c_in * g.h * g.w, out_image = g.c_out * positions;
    double* gx = grad_of(xn);
    double* gw = grad_of(wn);
    double* gb = bnode ? grad_of(bnode) : nullptr;
    std::vector<double> dcol(gx ? patch * positions : 0);
    for (std::size_t i = 0; i < g.n; ++i) {
      const double* dy = yn->grad.data() + i * out_image;
      const double* col = cols->data() + i * patch * positions;
      if (gw) gemm_nt(g.c_out, patch, positions, dy, col, gw);
      if (gb) {
        for (std::size_t o = 0; o < g.c_out; ++o) {
          double s = 0.0;
          for (std::size_t p = 0; p < positions; ++p) s += dy[o * positions + p];
          gb[o] += s;
        }
      }
      if (gx) {
        std::fill(dcol.begin(), dcol.end(), 0.0);
        gemm_tn(patch, positions, g.c_out, wn->data.data(), dy, dcol.data());
        col2im(g, dcol.data(), gx + i * in_image);
      }
    }
  });
  return y;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::span<double> running_mean,
                  std::span<double> running_var, BatchNormAttrs attrs) {
  if (x.rank() != 2 && x.rank() != 4) shape_fail("batch_norm", "expected rank 2 or 4, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), channels = x.dim(1);
  const std::size_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels} || running_mean.size() != channels ||
      running_var.size() != channels) {
    shape_fail("batch_norm", "parameters do not match " + std::to_string(channels) + " channels of " +
                                 to_string(x.shape()));
  }
  check_finite("batch_norm", x);
  const std::size_t count = n * spatial;
  if (attrs.training && count < 2) {
    shape_fail("batch_norm", "training mode needs more than one value per channel, got " + to_string(x.shape()));
  }

  auto at = [&](std::size_t b, std::size_t c, std::size_t s) { return (b * channels + c) * spatial + s; };

  std::vector<double> mu(channels), inv_std(channels);
  if (attrs.training) {
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < spatial; ++k) s += x[at(b, c, k)];
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < spatial; ++k) {
          const double d = x[at(b, c, k)] - m;
          v += d * d;
        }
      const double biased = v / static_cast<double>(count);
      const double unbiased = v / static_cast<double>(count - 1);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(biased + attrs.eps);
      running_mean[c] = (1.0 - attrs.momentum) * running_mean[c] + attrs.momentum * m;
      running_var[c] = (1.0 - attrs.momentum) * running_var[c] + attrs.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + attrs.eps);
    }
  }

  std::vector<double> xhat(x.size()), out(x.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t k = 0; k < spatial; ++k) {
        const std::size_t i = at(b, c, k);
        xhat[i] = (x[i] - mu[c]) * inv_std[c];
        out[i] = gamma[c] * xhat[i] + beta[c];
      }
  Tensor y(x.shape(), std::move(out));
  attach("batch_norm", y, {&x, &gamma, &beta},
         [xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node(), xhat = std::move(xhat),
          inv_std = std::move(inv_std), n, channels, spatial, count, training = attrs.training] {
           const auto& dy = yn->grad;
           auto at = [&](std::size_t b, std::size_t c, std::size_t s) { return (b * channels + c) * spatial + s; };
           double* gx = grad_of(xn);
           double* gg = grad_of(gn);
           double* gbeta = grad_of(bn);
           for (std::size_t c = 0; c < channels; ++c) {
             double sum_dy = 0.0, sum_dy_xhat = 0.0;
             for (std::size_t b = 0; b < n; ++b)
               for (std::size_t k = 0; k < spatial; ++k) {
                 const std::size_t i = at(b, c, k);
                 sum_dy += dy[i];
                 sum_dy_xhat += dy[i] * xhat[i];
               }
             if (gg) gg[c] += sum_dy_xhat;
             if (gbeta) gbeta[c] += sum_dy;
             if (!gx) continue;
             const double scale = gn->data[c] * inv_std[c];
             const double m = static_cast<double>(count);
             for (std::size_t b = 0; b < n; ++b)
               for (std::size_t k = 0; k < spatial; ++k) {
                 const std::size_t i = at(b, c, k);
                 if (training) {
                   gx[i] += scale * (dy[i] - sum_dy / m - xhat[i] * sum_dy_xhat / m);
                 } else {
                   gx[i] += scale * dy[i];
                 }
               }
           }
         });
  return y;
}

Tensor avg_pool2x2(const Tensor& x) {
  require_rank("avg_pool2x2", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) shape_fail("avg_pool2x2", "spatial size too small: " + to_string(x.shape()));
  check_finite("avg_pool2x2", x);
  std::vector<double> out(n * c * oh * ow);
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = x.data().data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const double* r0 = src + (2 * y) * w + 2 * xx;
        const double* r1 = r0 + w;
        dst[y * ow + xx] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  Tensor y({n, c, oh, ow}, std::move(out));
  attach("avg_pool2x2", y, {&x}, [xn = x.node(), yn = y.node(), n, c, h, w, oh, ow] {
    double* gx = grad_of(xn);
    if (!gx) return;
    for (std::size_t p = 0; p < n * c; ++p) {
      const double* g = yn->grad.data() + p * oh * ow;
      double* dst = gx + p * h * w;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const double v = 0.25 * g[y * ow + xx];
          dst[(2 * y) * w + 2 * xx] += v;
          dst[(2 * y) * w + 2 * xx + 1] += v;
          dst[(2 * y + 1) * w + 2 * xx] += v;
          dst[(2 * y + 1) * w + 2 * xx + 1] += v;
        }
    }
  });
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  check_finite("global_avg_pool", x);
  const std::size_t n = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  std::vector<double> out(n * c);
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < spatial; ++k) s += x[p * spatial + k];
    out[p] = s / static_cast<double>(spatial);
  }
  Tensor y({n, c}, std::move(out));
  attach("global_avg_pool", y, {&x}, [xn = x.node(), yn = y.node(), n, c, spatial] {
    double* gx = grad_of(xn);
    if (!gx) return;
    for (std::size_t p = 0; p < n * c; ++p) {
      const double v = yn->grad[p] / static_cast<double>(spatial);
      for (std::size_t k = 0; k < spatial; ++k) gx[p * spatial + k] += v;
    }
  });
  return y;
}

Tensor dropout(const Tensor& x, DropoutAttrs attrs) {
  if (attrs.p < 0.0 || attrs.p >= 1.0) shape_fail("dropout", "probability must be in [0, 1)");
  check_finite("dropout", x);
  if (!attrs.training || attrs.p == 0.0) {
    Tensor y(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
    attach("dropout", y, {&x}, [xn = x.node(), yn = y.node()] {
      if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < yn->grad.size(); ++i) gx[i] += yn->grad[i];
    });
    return y;
  }
  const double keep = 1.0 - attrs.p;
  const double scale = 1.0 / keep;
  Rng rng(attrs.seed);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < keep ? scale : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  Tensor y(x.shape(), std::move(out));
  attach("dropout", y, {&x}, [xn = x.node(), yn = y.node(), mask = std::move(mask)] {
    if (double* gx = grad_of(xn)) for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += yn->grad[i] * mask[i];
  });
  return y;
}

Tensor softmax(const Tensor& logits, double temperature) {
  require_rank("softmax", logits, 2);
  if (!(temperature > 0.0)) shape_fail("softmax", "temperature must be positive");
  check_finite("softmax", logits);
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data().data() + r * cols;
    double* p = out.data() + r * cols;
    const double zmax = *std::max_element(z, z + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp((z[c] - zmax) / temperature);
      total += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= total;
  }
  Tensor y(logits.shape(), std::move(out));
  attach("softmax", y, {&logits}, [zn = logits.node(), yn = y.node(), rows, cols, temperature] {
    double* gz = grad_of(zn);
    if (!gz) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* p = yn->data.data() + r * cols;
      const double* g = yn->grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += p[c] * g[c];
      for (std::size_t c = 0; c < cols; ++c) gz[r * cols + c] += p[c] * (g[c] - dot) / temperature;
    }
  });
  return y;
}

Tensor log_softmax(const Tensor& logits, double temperature) {
  require_rank("log_softmax", logits, 2);
  if (!(temperature > 0.0)) shape_fail("log_softmax", "temperature must be positive");
  check_finite("log_softmax", logits);
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data().data() + r * cols;
    double* lp = out.data() + r * cols;
    const double zmax = *std::max_element(z, z + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp((z[c] - zmax) / temperature);
    const double lse = std::log(total);
    for (std::size_t c = 0; c < cols; ++c) lp[c] = (z[c] - zmax) / temperature - lse;
  }
  Tensor y(logits.shape(), std::move(out));
  attach("log_softmax", y, {&logits}, [zn = logits.node(), yn = y.node(), rows, cols, temperature] {
    double* gz = grad_of(zn);
    if (!gz) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* lp = yn->data.data() + r * cols;
      const double* g = yn->grad.data() + r * cols;
      double gsum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gsum += g[c];
      for (std::size_t c = 0; c < cols; ++c) gz[r * cols + c] += (g[c] - std::exp(lp[c]) * gsum) / temperature;
    }
  });
  return y;
}

}  // namespace erde::ad
