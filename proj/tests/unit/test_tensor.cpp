// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <thread>

#include "erde/autodiff/ops.hpp"
#include "erde/error.hpp"
#include "erde/losses/losses.hpp"
#include "fixtures.hpp"

namespace {

using erde::ad::Tape;
using erde::ad::Tensor;
namespace ad = erde::ad;

TEST(Tensor, ElementCountMustMatchShape) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), erde::ShapeError);
  EXPECT_THROW(Tensor({2, 0}, {}), erde::ShapeError);
  const Tensor t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, CloneIsDeepDetachDropsGrad) {
  Tensor x = Tensor::vector({1, 2, 3}, true);
  Tensor c = x.clone();
  c.mutable_data()[0] = 9;
  EXPECT_EQ(x[0], 1.0);
  EXPECT_FALSE(x.detach().requires_grad());
}

TEST(Backward, SumOfSquares) {
  Tensor x = Tensor::vector({1, 2, 3}, true);
  Tape tape;
  Tape::Scope scope(tape);
  const Tensor loss = ad::sum(ad::mul(x, x));
  tape.backward(loss);
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
  EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Backward, SoftmaxCrossEntropyGradient) {
  Tensor z = Tensor::matrix(1, 2, {0.0, 0.0}, true);
  Tape tape;
  Tape::Scope scope(tape);
  const int label = 0;
  tape.backward(erde::losses::cross_entropy(z, std::span<const int>(&label, 1)));
  EXPECT_NEAR(z.grad()[0], erde::testing::oracle_value("ce_grad_0"), 1e-12);
  EXPECT_NEAR(z.grad()[1], erde::testing::oracle_value("ce_grad_1"), 1e-12);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor x = Tensor::vector({1, 2}, true);
  Tape tape;
  Tape::Scope scope(tape);
  const Tensor y = ad::mul(x, x);
  EXPECT_THROW(tape.backward(y), erde::ShapeError);
}

TEST(Backward, RejectsEmptyTape) {
  Tape tape;
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0, true)), erde::Error);
}

TEST(Backward, OffPathLeafHasNoGradient) {
  Tensor x = Tensor::vector({1, 2}, true);
  Tensor unused = Tensor::vector({5, 6}, true);
  Tape tape;
  Tape::Scope scope(tape);
  const Tensor side = ad::mul(unused, unused);  // recorded but not on the loss path
  (void)side;
  tape.backward(ad::sum(x));
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NoAccumulationUnlessRequested) {
  Tensor x = Tensor::vector({1, 2}, true);
  for (int step = 0; step < 2; ++step) {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(ad::sum(ad::mul_scalar(x, 3.0)));
  }
  EXPECT_EQ(x.grad()[0], 3.0);
  Tape tape;
  Tape::Scope scope(tape);
  tape.backward(ad::sum(ad::mul_scalar(x, 3.0)), true);
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Tape, PauseStopsRecording) {
  Tensor x = Tensor::vector({1, 2}, true);
  Tape tape;
  Tape::Scope scope(tape);
  {
    Tape::Pause pause;
    (void)ad::mul(x, x);
  }
  EXPECT_TRUE(tape.empty());
  (void)ad::mul(x, x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Tape, NoRecordingWithoutScope) {
  Tensor x = Tensor::vector({1, 2}, true);
  EXPECT_EQ(Tape::active(), nullptr);
  const Tensor y = ad::mul(x, x);
  EXPECT_EQ(y[1], 4.0);
}

TEST(Tape, IndependentTapesPerThread) {
  auto work = [](double scale, double* out) {
    Tensor x = Tensor::vector({1, 2, 3}, true);
    Tape tape;
    Tape::Scope scope(tape);
    for (int i = 0; i < 200; ++i) {
      tape.clear();
      tape.backward(ad::sum(ad::mul_scalar(ad::mul(x, x), scale)));
    }
    *out = x.grad()[2];
  };
  double a = 0, b = 0;
  std::thread t1(work, 1.0, &a), t2(work, 2.0, &b);
  t1.join();
  t2.join();
  EXPECT_EQ(a, 6.0);
  EXPECT_EQ(b, 12.0);
}

TEST(StrictFinite, RejectsNonFiniteInputs) {
  erde::ad::set_strict_finite(true);
  const Tensor bad = Tensor::vector({1.0, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(ad::relu(bad), erde::NonFiniteError);
  erde::ad::set_strict_finite(false);
  EXPECT_NO_THROW(ad::relu(bad));
}

}  // namespace
