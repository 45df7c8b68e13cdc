// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "erde/autodiff/ops.hpp"
#include "erde/error.hpp"
#include "erde/rng.hpp"
#include "fixtures.hpp"

namespace {

using erde::Rng;
using erde::ad::Tensor;
namespace ad = erde::ad;

Tensor random(ad::Shape shape, Rng& rng) {
  std::vector<double> v(ad::element_count(shape));
  for (double& x : v) x = rng.uniform(-1, 1);
  return Tensor(std::move(shape), std::move(v));
}

TEST(Conv2d, SamePaddingShape) {
  Rng rng(1);
  const Tensor y = ad::conv2d(random({1, 3, 8, 8}, rng), random({8, 3, 3, 3}, rng), Tensor(), {1, 1});
  EXPECT_EQ(y.shape(), (ad::Shape{1, 8, 8, 8}));
}

TEST(Conv2d, MatchesDirectLoop) {
  Rng rng(2);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      const Tensor x = random({2, 3, 7, 6}, rng), w = random({4, 3, 3, 3}, rng), b = random({4}, rng);
      const Tensor y = ad::conv2d(x, w, b, {stride, pad});
      const std::size_t oh = (7 + 2 * pad - 3) / stride + 1, ow = (6 + 2 * pad - 3) / stride + 1;
      ASSERT_EQ(y.shape(), (ad::Shape{2, 4, oh, ow}));
      for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t o = 0; o < 4; ++o) {
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              double s = b[o];
              for (std::size_t c = 0; c < 3; ++c) {
                for (std::size_t ki = 0; ki < 3; ++ki) {
                  for (std::size_t kj = 0; kj < 3; ++kj) {
                    const long yy = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                    const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                    if (yy < 0 || xx < 0 || yy >= 7 || xx >= 6) continue;
                    s += x[((n * 3 + c) * 7 + yy) * 6 + xx] * w[((o * 3 + c) * 3 + ki) * 3 + kj];
                  }
                }
              }
              EXPECT_NEAR(y[((n * 4 + o) * oh + i) * ow + j], s, 1e-12);
            }
          }
        }
      }
    }
  }
}

TEST(Conv2d, ShapeErrorNamesOpAndDims) {
  Rng rng(3);
  try {
    (void)ad::conv2d(random({1, 3, 8, 8}, rng), random({8, 2, 3, 3}, rng), Tensor(), {1, 1});
    FAIL() << "expected ShapeError";
  } catch (const erde::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("conv2d"), std::string::npos);
    EXPECT_NE(msg.find("3 channels"), std::string::npos);
  }
}

TEST(Elementwise, ShapeMismatch) {
  EXPECT_THROW(ad::add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), erde::ShapeError);
  EXPECT_THROW(ad::matmul(Tensor::matrix(2, 3, std::vector<double>(6)), Tensor::matrix(2, 3, std::vector<double>(6))),
               erde::ShapeError);
}

TEST(Relu, Definition) {
  const Tensor y = ad::relu(Tensor::vector({-1, 0, 3}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 3.0);
}

TEST(Softmax, TemperatureExample) {
  const Tensor p = ad::softmax(Tensor::matrix(1, 2, {2.0, 0.0}), 2.0);
  EXPECT_NEAR(p[0], erde::testing::oracle_value("softmax_2_0_T2_0"), 1e-15);
  EXPECT_NEAR(p[1], erde::testing::oracle_value("softmax_2_0_T2_1"), 1e-15);
}

TEST(Softmax, RowsSumToOneAndArePositive) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng.below(5), k = 2 + rng.below(8);
    std::vector<double> z(b * k);
    for (double& v : z) v = rng.uniform(-50, 50);
    const double t = rng.uniform(0.1, 5.0);
    const Tensor p = ad::softmax(Tensor::matrix(b, k, z), t);
    for (std::size_t r = 0; r < b; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < k; ++c) {
        EXPECT_GT(p[r * k + c], 0.0);
        s += p[r * k + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Softmax, StableForLargeLogits) {
  const Tensor p = ad::log_softmax(Tensor::matrix(1, 3, {1000.0, 999.0, -1000.0}));
  EXPECT_TRUE(std::isfinite(p[2]));
  EXPECT_NEAR(p[0], -std::log1p(std::exp(-1.0) + std::exp(-2000.0)), 1e-12);
}

TEST(Dropout, EvalIsIdentity) {
  const Tensor x = Tensor::vector({1, 2, 3, 4});
  const Tensor y = ad::dropout(x, {0.5, false, 7});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Dropout, TrainMaskReproducibleAndInverted) {
  const Tensor x = Tensor::filled({1000}, 1.0);
  const Tensor a = ad::dropout(x, {0.25, true, 11});
  const Tensor b = ad::dropout(x, {0.25, true, 11});
  const Tensor c = ad::dropout(x, {0.25, true, 12});
  std::size_t kept = 0, differ = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_TRUE(a[i] == 0.0 || a[i] == 1.0 / 0.75);
    kept += a[i] != 0.0;
    differ += a[i] != c[i];
  }
  EXPECT_NEAR(static_cast<double>(kept) / 1000.0, 0.75, 0.06);
  EXPECT_GT(differ, 0u);
}

TEST(BatchNorm, EvalUsesRunningStatisticsOnly) {
  std::vector<double> mean{1.0, -1.0}, var{4.0, 0.25};
  const Tensor x = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const Tensor g = Tensor::vector({2.0, 1.0}), b = Tensor::vector({0.5, 0.0});
  const Tensor y1 = ad::batch_norm(x, g, b, mean, var, {0.1, 0.0, false});
  const Tensor y2 = ad::batch_norm(x, g, b, mean, var, {0.1, 0.0, false});
  EXPECT_EQ(mean[0], 1.0);
  EXPECT_EQ(var[1], 0.25);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y1[i], y2[i]);
  EXPECT_DOUBLE_EQ(y1[0], 2.0 * (1 - 1) / 2.0 + 0.5);
  EXPECT_DOUBLE_EQ(y1[3], (4 + 1) / 0.5);
}

TEST(BatchNorm, TrainUpdatesRunningStatistics) {
  std::vector<double> mean{0.0}, var{1.0};
  const Tensor x = Tensor::matrix(4, 1, {1, 2, 3, 6});
  const Tensor y = ad::batch_norm(x, Tensor::vector({1.0}), Tensor::vector({0.0}), mean, var, {0.1, 0.0, true});
  // batch mean 3, biased var 3.5, unbiased var 14/3
  EXPECT_DOUBLE_EQ(mean[0], 0.3);
  EXPECT_DOUBLE_EQ(var[0], 0.9 + 0.1 * 14.0 / 3.0);
  EXPECT_NEAR(y[3], 3.0 / std::sqrt(3.5), 1e-12);
}

TEST(Pooling, AveragePoolDropsOddEdge) {
  std::vector<double> v(15);
  for (std::size_t i = 0; i < 15; ++i) v[i] = static_cast<double>(i);
  const Tensor y = ad::avg_pool2x2(Tensor({1, 1, 3, 5}, v));
  ASSERT_EQ(y.shape(), (ad::Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[0], (0 + 1 + 5 + 6) / 4.0);
  EXPECT_DOUBLE_EQ(y[1], (2 + 3 + 7 + 8) / 4.0);
  const Tensor g = ad::global_avg_pool(Tensor({1, 1, 3, 5}, v));
  EXPECT_DOUBLE_EQ(g[0], 7.0);
}

TEST(Linear, MatchesManual) {
  const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor w = Tensor::matrix(2, 3, {1, 0, -1, 0.5, 0.5, 0.5});
  const Tensor y = ad::linear(x, w, Tensor::vector({10, 20}));
  EXPECT_DOUBLE_EQ(y[0], 1 - 3 + 10.0);
  EXPECT_DOUBLE_EQ(y[1], 3 + 20.0);
  EXPECT_DOUBLE_EQ(y[3], 7.5 + 20.0);
}

}  // namespace
