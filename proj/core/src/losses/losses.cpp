// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/losses/losses.hpp"

#include <string>

#include "erde/autodiff/ops.hpp"
#include "erde/error.hpp"

namespace erde::losses {

void LossWeights::validate() const {
  if (!(omega_kl >= 0.0) || !(omega_ce >= 0.0) || !(omega_e >= 0.0)) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

namespace {

void require_logits(const char* op, const Tensor& logits) {
  if (!logits.defined() || logits.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected B x K logits, got " +
                     (logits.defined() ? ad::to_string(logits.shape()) : std::string("<undefined>")));
  }
  if (logits.dim(1) == 0) throw ShapeError(std::string(op) + ": class count K must be positive");
}

void require_labels(const char* op, const Tensor& logits, std::span<const int> labels) {
  if (labels.size() != logits.dim(0)) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(logits.dim(0)));
  }
  const int k = static_cast<int>(logits.dim(1));
  for (int y : labels) {
    if (y < 0 || y >= k) {
      throw ShapeError(std::string(op) + ": label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
  }
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<double> values(labels.size() * classes, 0.0);
  for (std::size_t b = 0; b < labels.size(); ++b) values[b * classes + static_cast<std::size_t>(labels[b])] = 1.0;
  return Tensor({labels.size(), classes}, std::move(values));
}

Tensor mask_vector(const std::vector<bool>& mask, bool value) {
  std::vector<double> v(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) v[i] = mask[i] == value ? 1.0 : 0.0;
  return Tensor::vector(std::move(v));
}

double masked_mean(const Tensor& per_example, const std::vector<bool>& mask, bool value) {
  double s = 0.0;
  for (std::size_t i = 0; i < per_example.size(); ++i) {
    if (mask.empty() ? value : mask[i] == value) s += per_example[i];
  }
  return s / static_cast<double>(per_example.size());
}

struct ExitInputs {
  const Tensor* student;
  const Tensor* teacher;
};

std::vector<ExitInputs> pair_exits(const char* op, std::span<const Tensor> student, std::span<const Tensor> teacher,
                                   const ExitAlignment& alignment) {
  if (student.empty()) throw ShapeError(std::string(op) + ": no student exits");
  const ExitAlignment map = resolve_alignment(alignment, student.size(), teacher.size());
  std::vector<ExitInputs> out;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const Tensor& s = student[i];
    const Tensor& t = teacher[map[i]];
    require_logits(op, s);
    require_logits(op, t);
    if (s.shape() != t.shape()) {
      throw ShapeError(std::string(op) + ": student exit " + std::to_string(i + 1) + " " + ad::to_string(s.shape()) +
                       " vs teacher exit " + std::to_string(map[i] + 1) + " " + ad::to_string(t.shape()));
    }
    out.push_back({&s, &t});
  }
  return out;
}

}  // namespace

ExitAlignment resolve_alignment(const ExitAlignment& alignment, std::size_t student_exits, std::size_t teacher_exits) {
  if (alignment.empty()) {
    if (student_exits != teacher_exits) {
      throw ConfigError("exit-count mismatch: student has " + std::to_string(student_exits) + " exits, teacher has " +
                        std::to_string(teacher_exits) + "; an exit alignment map is required");
    }
    ExitAlignment identity(student_exits);
    for (std::size_t i = 0; i < student_exits; ++i) identity[i] = i;
    return identity;
  }
  if (alignment.size() != student_exits) {
    throw ConfigError("exit alignment lists " + std::to_string(alignment.size()) + " entries for " +
                      std::to_string(student_exits) + " student exits");
  }
  for (std::size_t a : alignment) {
    if (a >= teacher_exits) {
      throw ConfigError("exit alignment refers to teacher exit " + std::to_string(a + 1) + " but the teacher has " +
                        std::to_string(teacher_exits));
    }
  }
  return alignment;
}

Tensor kl_per_example(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
  require_logits("kl_distill", student_logits);
  require_logits("kl_distill", teacher_logits);
  if (student_logits.shape() != teacher_logits.shape()) {
    throw ShapeError("kl_distill: student " + ad::to_string(student_logits.shape()) + " vs teacher " +
                     ad::to_string(teacher_logits.shape()));
  }
  if (!(temperature > 0.0)) throw ShapeError("kl_distill: temperature must be positive");
  Tensor teacher_prob, teacher_log_prob;
  {
    ad::Tape::Pause detached;
    const Tensor t = teacher_logits.detach();
    teacher_prob = ad::softmax(t, temperature);
    teacher_log_prob = ad::log_softmax(t, temperature);
  }
  const Tensor student_log_prob = ad::log_softmax(student_logits, temperature);
  const Tensor pointwise = ad::mul(teacher_prob, ad::sub(teacher_log_prob, student_log_prob));
  const double k = static_cast<double>(student_logits.dim(1));
  return ad::mul_scalar(ad::sum_rows(pointwise), temperature * temperature / k);
}

Tensor kl_distill(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
  return ad::mean(kl_per_example(student_logits, teacher_logits, temperature));
}

Tensor cross_entropy_per_example(const Tensor& student_logits, std::span<const int> labels, double temperature) {
  require_logits("cross_entropy", student_logits);
  require_labels("cross_entropy", student_logits, labels);
  const Tensor log_prob = ad::log_softmax(student_logits, temperature);
  return ad::mul_scalar(ad::sum_rows(ad::mul(one_hot(labels, student_logits.dim(1)), log_prob)), -1.0);
}

Tensor cross_entropy(const Tensor& student_logits, std::span<const int> labels, double temperature) {
  return ad::mean(cross_entropy_per_example(student_logits, labels, temperature));
}

Tensor neg_entropy_per_example(const Tensor& student_logits) {
  require_logits("entropy_regularizer", student_logits);
  const Tensor p = ad::softmax(student_logits);
  const Tensor log_p = ad::log_softmax(student_logits);
  return ad::sum_rows(ad::mul(p, log_p));
}

Tensor entropy_regularizer(const Tensor& student_logits) { return ad::mean(neg_entropy_per_example(student_logits)); }

std::vector<bool> teacher_correct_mask(const Tensor& teacher_logits, std::span<const int> labels) {
  require_logits("teacher_correct_mask", teacher_logits);
  require_labels("teacher_correct_mask", teacher_logits, labels);
  const std::size_t k = teacher_logits.dim(1);
  std::vector<bool> mask(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (teacher_logits[b * k + c] > teacher_logits[b * k + best]) best = c;
    }
    mask[b] = static_cast<int>(best) == labels[b];
  }
  return mask;
}

Tensor kd_per_example(const Tensor& student_logits, const Tensor& teacher_logits, std::span<const int> labels,
                      const LossWeights& weights) {
  const double ce_temperature = weights.soften_ce ? weights.temperature : 1.0;
  return ad::add(ad::mul_scalar(kl_per_example(student_logits, teacher_logits, weights.temperature), weights.omega_kl),
                 ad::mul_scalar(cross_entropy_per_example(student_logits, labels, ce_temperature), weights.omega_ce));
}

namespace {

LossBreakdown distill(const char* op, std::span<const Tensor> student_exits, std::span<const Tensor> teacher_exits,
                      std::span<const int> labels, const LossWeights& weights, const ExitAlignment& alignment,
                      bool gate_intermediate) {
  weights.validate();
  const auto pairs = pair_exits(op, student_exits, teacher_exits, alignment);
  const double ce_temperature = weights.soften_ce ? weights.temperature : 1.0;
  LossBreakdown out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Tensor& s = *pairs[i].student;
    const Tensor& t = *pairs[i].teacher;
    require_labels(op, s, labels);
    const Tensor kl = kl_per_example(s, t, weights.temperature);
    const Tensor ce = cross_entropy_per_example(s, labels, ce_temperature);
    const Tensor kd = ad::add(ad::mul_scalar(kl, weights.omega_kl), ad::mul_scalar(ce, weights.omega_ce));

    ExitTerms terms;
    Tensor exit_loss;
    const bool gated = gate_intermediate && i + 1 < pairs.size();
    if (gated) {
      terms.teacher_correct = teacher_correct_mask(t, labels);
      const Tensor neg_entropy = neg_entropy_per_example(s);
      const Tensor contribution =
          ad::add(ad::mul(kd, mask_vector(terms.teacher_correct, true)),
                  ad::mul(ad::mul_scalar(neg_entropy, weights.omega_e), mask_vector(terms.teacher_correct, false)));
      exit_loss = ad::mean(contribution);
      terms.entropy = masked_mean(neg_entropy, terms.teacher_correct, false);
    } else {
      exit_loss = ad::mean(kd);
    }
    terms.kl = masked_mean(kl, terms.teacher_correct, true);
    terms.ce = masked_mean(ce, terms.teacher_correct, true);
    out.exits.push_back(std::move(terms));
    out.total = out.total.defined() ? ad::add(out.total, exit_loss) : exit_loss;
  }
  return out;
}

}  // namespace

LossBreakdown erde_total(std::span<const Tensor> student_exits, std::span<const Tensor> teacher_exits,
                         std::span<const int> labels, const LossWeights& weights, const ExitAlignment& alignment) {
  return distill("erde_total", student_exits, teacher_exits, labels, weights, alignment, true);
}

LossBreakdown kd_baseline(std::span<const Tensor> student_exits, std::span<const Tensor> teacher_exits,
                          std::span<const int> labels, const LossWeights& weights, const ExitAlignment& alignment) {
  return distill("kd_baseline", student_exits, teacher_exits, labels, weights, alignment, false);
}

Tensor ce_joint(std::span<const Tensor> exits, std::span<const int> labels) {
  if (exits.empty()) throw ShapeError("ce_joint: no exits");
  Tensor total;
  for (const Tensor& logits : exits) {
    const Tensor ce = cross_entropy(logits, labels);
    total = total.defined() ? ad::add(total, ce) : ce;
  }
  return total;
}

double combine(const LossWeights& weights, std::span<const ExitTerms> exits) {
  double total = 0.0;
  for (const ExitTerms& t : exits) {
    total += weights.omega_kl * t.kl + weights.omega_ce * t.ce + weights.omega_e * t.entropy;
  }
  return total;
}

}  // namespace erde::losses
