// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "erde/autodiff/tensor.hpp"

// Differentiable primitives. Every function returns a fresh tensor and, when a
// tape is active and any input requires grad, records its gradient rule.
namespace erde::ad {

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sums a B x K matrix along its last axis, giving a length-B vector.
Tensor sum_rows(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// N x (C*H*W...) view of an N-leading tensor.
Tensor flatten(const Tensor& x);

/// [m x k] * [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Fully-connected layer: x[B x in] * weight[out x in]^T + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Conv2dAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// NCHW convolution with zero padding. weight is [C_out x C_in x kH x kW];
/// `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dAttrs attrs);

struct BatchNormAttrs {
  double momentum = 0.1;
  double eps = 1e-5;
  bool training = false;
};

/// Per-channel normalization of an N x C (x H x W) tensor.
///
/// In training mode batch statistics are used and the running statistics are
/// updated in place (running_var with the unbiased batch variance). In eval
/// mode only the running statistics are read.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::span<double> running_mean,
                  std::span<double> running_var, BatchNormAttrs attrs);

/// 2x2 window, stride 2; trailing odd rows/columns are dropped.
Tensor avg_pool2x2(const Tensor& x);
/// N x C x H x W -> N x C.
Tensor global_avg_pool(const Tensor& x);

struct DropoutAttrs {
  double p = 0.5;
  bool training = false;
  std::uint64_t seed = 0;
};

/// Inverted dropout: kept activations are scaled by 1/(1-p) at train time.
/// Identity in eval mode. The mask is a pure function of `seed`.
Tensor dropout(const Tensor& x, DropoutAttrs attrs);

/// Row-wise softmax(x / T) of a B x K matrix, max-subtracted.
Tensor softmax(const Tensor& logits, double temperature = 1.0);
/// Row-wise log(softmax(x / T)) computed via log-sum-exp.
Tensor log_softmax(const Tensor& logits, double temperature = 1.0);

}  // namespace erde::ad
