// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "erde/autodiff/ops.hpp"
#include "erde/error.hpp"
#include "erde/losses/losses.hpp"
#include "erde/rng.hpp"
#include "fixtures.hpp"

namespace {

using erde::ad::Tape;
using erde::ad::Tensor;
using erde::testing::oracle_value;
using namespace erde::losses;

// Logits whose softmax at temperature t is exactly p.
Tensor logits_for(std::vector<double> p, double t = 1.0) {
  const std::size_t k = p.size();
  for (double& v : p) v = t * std::log(v);
  return Tensor::matrix(1, k, std::move(p));
}

Tensor random_logits(erde::Rng& rng, std::size_t b, std::size_t k, double scale = 2.0) {
  std::vector<double> v(b * k);
  for (double& x : v) x = scale * rng.normal();
  return Tensor::matrix(b, k, std::move(v));
}

std::vector<int> random_labels(erde::Rng& rng, std::size_t b, std::size_t k) {
  std::vector<int> labels(b);
  for (int& y : labels) y = static_cast<int>(rng.below(k));
  return labels;
}

TEST(Losses, ClosedFormExamples) {
  EXPECT_NEAR(kl_distill(logits_for({0.5, 0.5}), logits_for({0.75, 0.25}, 2.0), 2.0).item(),
              oracle_value("kl_example"), 1e-12);
  const std::vector<int> one{1};
  EXPECT_NEAR(cross_entropy(logits_for({0.25, 0.75}), one).item(), oracle_value("ce_example"), 1e-12);
  EXPECT_NEAR(entropy_regularizer(logits_for({0.9, 0.1})).item(), oracle_value("neg_entropy_example"), 1e-12);

  const LossWeights w;
  const ExitTerms terms{oracle_value("kl_example"), oracle_value("ce_example"), oracle_value("neg_entropy_example"), {}};
  EXPECT_NEAR(combine(w, std::span(&terms, 1)), oracle_value("composite_total"), 1e-12);
}

TEST(Losses, KlNonNegativeAndZeroOnEqualInputs) {
  erde::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    const Tensor s = random_logits(rng, 4, k, 4.0), t = random_logits(rng, 4, k, 4.0);
    const double temp = 0.5 + 4.0 * rng.uniform();
    const Tensor rows = kl_per_example(s, t, temp);
    for (std::size_t b = 0; b < 4; ++b) EXPECT_GE(rows[b], -1e-12);
    EXPECT_NEAR(kl_distill(s, s, temp).item(), 0.0, 1e-9);
  }
}

TEST(Losses, NegEntropyBoundsAttained) {
  erde::Rng rng(12);
  for (std::size_t k : {2u, 4u, 10u}) {
    EXPECT_NEAR(entropy_regularizer(Tensor::zeros({1, k})).item(), -std::log(static_cast<double>(k)), 1e-12);
    std::vector<double> peaked(k, -1000.0);
    peaked[0] = 1000.0;
    EXPECT_NEAR(entropy_regularizer(Tensor::matrix(1, k, peaked)).item(), 0.0, 1e-12);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor rows = neg_entropy_per_example(random_logits(rng, 3, k, 5.0));
      for (std::size_t b = 0; b < 3; ++b) {
        EXPECT_LE(rows[b], 1e-15);
        EXPECT_GE(rows[b], -std::log(static_cast<double>(k)) - 1e-12);
      }
    }
  }
}

TEST(Losses, CeJointUniform) {
  std::vector<Tensor> exits(3, Tensor::zeros({2, 10}));
  const std::vector<int> labels{3, 7};
  EXPECT_NEAR(ce_joint(exits, labels).item(), oracle_value("ce_joint_3_uniform_K10"), 1e-12);
}

TEST(Losses, TeacherCorrectMask) {
  const Tensor t = Tensor::matrix(4, 3, {2, 1, 0, 0, 5, 1, 1, 1, 0, 0, 3, 3});
  const std::vector<int> labels{0, 2, 1, 2};
  // Row 2 ties classes 0 and 1; the lowest index wins so label 1 is wrong.
  EXPECT_EQ(teacher_correct_mask(t, labels), (std::vector<bool>{true, false, false, false}));
  const std::vector<int> labels2{0, 1, 0, 1};
  EXPECT_EQ(teacher_correct_mask(t, labels2), (std::vector<bool>{true, true, true, true}));
  const std::vector<int> bad{0, 1, 0, 3};
  EXPECT_THROW((void)teacher_correct_mask(t, bad), erde::Error);
}

struct TwoExitCase {
  std::vector<Tensor> s, t;
  std::vector<int> labels{0, 2};
};

TwoExitCase two_exit_case() {
  TwoExitCase c;
  c.s = {Tensor::matrix(2, 3, {1.0, -0.5, 0.25, 0.3, 0.9, -1.2}), Tensor::matrix(2, 3, {0.2, 0.1, -0.3, -0.7, 0.4, 1.1})};
  c.t = {Tensor::matrix(2, 3, {2.0, 0.1, -0.4, 1.5, 0.2, 0.4}), Tensor::matrix(2, 3, {1.2, -0.3, 0.6, -0.2, 0.0, 0.8})};
  return c;
}

TEST(Losses, TwoExitTotalsMatchOracle) {
  const auto c = two_exit_case();
  const LossWeights w;
  const auto erde = erde_total(c.s, c.t, c.labels, w);
  const auto kd = kd_baseline(c.s, c.t, c.labels, w);
  EXPECT_NEAR(erde.value(), oracle_value("erde_two_exit_total"), 1e-12);
  EXPECT_NEAR(kd.value(), oracle_value("kd_two_exit_total"), 1e-12);
  EXPECT_EQ(erde.exits[0].teacher_correct, (std::vector<bool>{true, false}));
  EXPECT_NEAR(combine(w, erde.exits), erde.value(), 1e-9);
  EXPECT_NEAR(combine(w, kd.exits), kd.value(), 1e-9);
  EXPECT_EQ(kd.exits[0].entropy, 0.0);
}

TEST(Losses, ErdeEqualsKdWhenTeacherAlwaysCorrect) {
  erde::Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.below(8), k = 2 + rng.below(6), n = 1 + rng.below(4);
    const auto labels = random_labels(rng, b, k);
    std::vector<Tensor> s, t;
    for (std::size_t e = 0; e < n; ++e) {
      s.push_back(random_logits(rng, b, k));
      Tensor te = random_logits(rng, b, k);
      for (std::size_t r = 0; r < b; ++r) te.mutable_data()[r * k + static_cast<std::size_t>(labels[r])] += 50.0;
      t.push_back(te);
    }
    LossWeights w;
    w.omega_e = rng.uniform();
    w.temperature = 0.5 + 3.0 * rng.uniform();
    const double erde = erde_total(s, t, labels, w).value();
    const double kd = kd_baseline(s, t, labels, w).value();
    EXPECT_EQ(erde, kd) << "trial " << trial;
  }
}

TEST(Losses, BreakdownMatchesCombineRandomized) {
  erde::Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.below(8), k = 2 + rng.below(6);
    const auto labels = random_labels(rng, b, k);
    std::vector<Tensor> s{random_logits(rng, b, k), random_logits(rng, b, k), random_logits(rng, b, k)};
    std::vector<Tensor> t{random_logits(rng, b, k), random_logits(rng, b, k)};
    LossWeights w{rng.uniform(), rng.uniform(), rng.uniform(), 0.5 + 3.0 * rng.uniform(), trial % 2 == 0};
    const ExitAlignment align{0, 0, 1};
    const auto erde = erde_total(s, t, labels, w, align);
    EXPECT_NEAR(combine(w, erde.exits), erde.value(), 1e-9);
    const auto kd = kd_baseline(s, t, labels, w, align);
    EXPECT_NEAR(combine(w, kd.exits), kd.value(), 1e-9);
  }
}

TEST(Losses, DescentOnTeacherWrongRowRaisesEntropy) {
  // Single intermediate exit row where the teacher is wrong: only w_e * sum p log p acts.
  Tensor s = Tensor::matrix(1, 3, {2.0, -1.0, 0.5});
  s.set_requires_grad(true);
  const Tensor s_final = Tensor::matrix(1, 3, {0.0, 0.0, 0.0});
  const std::vector<Tensor> t{Tensor::matrix(1, 3, {0.0, 3.0, 0.0}), Tensor::matrix(1, 3, {0.0, 0.0, 0.0})};
  const std::vector<int> labels{0};
  LossWeights w;
  w.omega_e = 1.0;
  const double before = -neg_entropy_per_example(s)[0];
  Tape tape;
  {
    Tape::Scope scope(tape);
    const std::vector<Tensor> exits{s, s_final};
    const auto loss = erde_total(exits, t, labels, w);
    tape.backward(loss.total);
  }
  Tensor stepped = s.detach().clone();
  for (std::size_t i = 0; i < 3; ++i) stepped.mutable_data()[i] -= 0.1 * s.grad()[i];
  EXPECT_GT(-neg_entropy_per_example(stepped)[0], before);
}

TEST(Losses, TeacherReceivesNoGradient) {
  Tensor s = Tensor::matrix(2, 3, {1, 2, 3, -1, 0, 1});
  Tensor t = Tensor::matrix(2, 3, {3, 2, 1, 0, 0, 2});
  s.set_requires_grad(true);
  t.set_requires_grad(true);
  const std::vector<int> labels{0, 2};
  Tape tape;
  {
    Tape::Scope scope(tape);
    const std::vector<Tensor> se{s}, te{t};
    tape.backward(erde_total(se, te, labels, LossWeights{}).total);
  }
  EXPECT_TRUE(s.has_grad());
  for (double g : t.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Losses, AlignmentValidation) {
  EXPECT_EQ(resolve_alignment({}, 3, 3), (ExitAlignment{0, 1, 2}));
  EXPECT_THROW(resolve_alignment({}, 2, 3), erde::ConfigError);
  EXPECT_EQ(resolve_alignment({0, 2}, 2, 3), (ExitAlignment{0, 2}));
  EXPECT_THROW(resolve_alignment({0, 3}, 2, 3), erde::ConfigError);
  EXPECT_THROW(resolve_alignment({0}, 2, 3), erde::ConfigError);
}

TEST(Losses, WeightValidation) {
  EXPECT_NO_THROW(LossWeights{}.validate());
  EXPECT_THROW((LossWeights{-0.1, 0.75, 0.005, 2.0, false}).validate(), erde::ConfigError);
  EXPECT_THROW((LossWeights{0.25, 0.75, 0.005, 0.0, false}).validate(), erde::ConfigError);
}

TEST(Losses, SoftenedCrossEntropy) {
  const Tensor s = Tensor::matrix(1, 2, {2.0, 0.0});
  const Tensor t = Tensor::matrix(1, 2, {0.0, 0.0});
  const std::vector<int> labels{0};
  LossWeights w{0.0, 1.0, 0.0, 2.0, false};
  EXPECT_NEAR(kd_per_example(s, t, labels, w)[0], -std::log(1.0 / (1.0 + std::exp(-2.0))), 1e-12);
  w.soften_ce = true;
  EXPECT_NEAR(kd_per_example(s, t, labels, w)[0], -std::log(oracle_value("softmax_2_0_T2_0")), 1e-12);
}

TEST(Losses, LabelOutOfRange) {
  const std::vector<int> labels{5};
  EXPECT_THROW((void)cross_entropy(Tensor::zeros({1, 3}), labels), erde::Error);
}

}  // namespace
