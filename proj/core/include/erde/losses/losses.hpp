// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "erde/autodiff/tensor.hpp"

namespace erde::losses {

using ad::Tensor;

struct LossWeights {
  double omega_kl = 0.25;
  double omega_ce = 0.75;
  double omega_e = 0.005;
  double temperature = 2.0;
  /// Apply the temperature to the CE term as well (off: CE uses T = 1).
  bool soften_ce = false;

  /// Throws ConfigError unless all weights are >= 0 and T > 0.
  void validate() const;
};

/// Maps student exit i to teacher exit alignment[i] (both 0-based). Empty
/// means identity, which requires equal exit counts.
using ExitAlignment = std::vector<std::size_t>;

/// Per-exit gated batch means. For gated exits `kl` and `ce` sum over
/// teacher-correct rows and `entropy` (sum p log p) over teacher-wrong rows,
/// each divided by the full batch size, so that
///   total = sum_i  w_kl * kl_i + w_ce * ce_i + w_e * entropy_i.
struct ExitTerms {
  double kl = 0.0;
  double ce = 0.0;
  double entropy = 0.0;
  std::vector<bool> teacher_correct;  // empty for exits without a teacher
};

struct LossBreakdown {
  std::vector<ExitTerms> exits;
  Tensor total;  // scalar, differentiable w.r.t. student logits

  double value() const { return total.item(); }
};

/// (T^2 / K) * sum_k p_T log(p_T / p_S) per row, p = softmax(z / T). The
/// teacher side is detached.
Tensor kl_per_example(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);
Tensor kl_distill(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);

/// -log softmax(z / T)[label] per row.
Tensor cross_entropy_per_example(const Tensor& student_logits, std::span<const int> labels, double temperature = 1.0);
Tensor cross_entropy(const Tensor& student_logits, std::span<const int> labels, double temperature = 1.0);

/// sum_k p log p per row (negative entropy, in [-ln K, 0]).
Tensor neg_entropy_per_example(const Tensor& student_logits);
Tensor entropy_regularizer(const Tensor& student_logits);

/// Row b is true iff argmax_k teacher_logits[b, k] == labels[b]; ties go to
/// the lowest class index.
std::vector<bool> teacher_correct_mask(const Tensor& teacher_logits, std::span<const int> labels);

/// w_kl * L_KL + w_ce * L_CE per row; the term shared by KD and ERDE.
Tensor kd_per_example(const Tensor& student_logits, const Tensor& teacher_logits, std::span<const int> labels,
                      const LossWeights& weights);

/// Entropy-regularized distillation. Intermediate exits contribute the KD
/// term on teacher-correct rows and w_e * sum p log p on teacher-wrong rows
/// (minimizing the total therefore raises the student's entropy there); the
/// last exit always contributes the KD term.
LossBreakdown erde_total(std::span<const Tensor> student_exits, std::span<const Tensor> teacher_exits,
                         std::span<const int> labels, const LossWeights& weights, const ExitAlignment& alignment = {});

/// Plain KD summed over every exit.
LossBreakdown kd_baseline(std::span<const Tensor> student_exits, std::span<const Tensor> teacher_exits,
                          std::span<const int> labels, const LossWeights& weights, const ExitAlignment& alignment = {});

/// Sum of per-exit cross entropies (teacher and no-KD training).
Tensor ce_joint(std::span<const Tensor> exits, std::span<const int> labels);

/// sum_i w_kl * kl_i + w_ce * ce_i + w_e * entropy_i, from breakdown components.
double combine(const LossWeights& weights, std::span<const ExitTerms> exits);

/// Resolves `alignment` against the exit counts, throwing on mismatch.
ExitAlignment resolve_alignment(const ExitAlignment& alignment, std::size_t student_exits, std::size_t teacher_exits);

}  // namespace erde::losses
