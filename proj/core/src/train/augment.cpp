// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/train/augment.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "erde/error.hpp"
#include "erde/rng.hpp"

namespace erde::train {

namespace {

struct Image {
  std::size_t c, h, w;
  std::span<double> px;

  double& at(std::size_t ch, std::size_t y, std::size_t x) { return px[(ch * h + y) * w + x]; }
};

void flip(Image& img) {
  for (std::size_t ch = 0; ch < img.c; ++ch) {
    for (std::size_t y = 0; y < img.h; ++y) {
      for (std::size_t x = 0; x < img.w / 2; ++x) std::swap(img.at(ch, y, x), img.at(ch, y, img.w - 1 - x));
    }
  }
}

// out(y, x) = in(y - dy, x - dx), zero outside.
void shift(Image& img, long dy, long dx) {
  if (dy == 0 && dx == 0) return;
  const std::vector<double> src(img.px.begin(), img.px.end());
  const long h = static_cast<long>(img.h), w = static_cast<long>(img.w);
  for (std::size_t ch = 0; ch < img.c; ++ch) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const long sy = y - dy, sx = x - dx;
        const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
        img.at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            inside ? src[(ch * img.h + static_cast<std::size_t>(sy)) * img.w + static_cast<std::size_t>(sx)] : 0.0;
      }
    }
  }
}

void rotate(Image& img, double degrees) {
  const std::vector<double> src(img.px.begin(), img.px.end());
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cy = (static_cast<double>(img.h) - 1.0) / 2.0, cx = (static_cast<double>(img.w) - 1.0) / 2.0;
  auto sample = [&](std::size_t ch, long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(img.h) || x >= static_cast<long>(img.w)) return 0.0;
    return src[(ch * img.h + static_cast<std::size_t>(y)) * img.w + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      // Inverse mapping of the output pixel into the source image.
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double sy = cy + ca * dy - sa * dx;
      const double sx = cx + sa * dy + ca * dx;
      const double fy = std::floor(sy), fx = std::floor(sx);
      const double ty = sy - fy, tx = sx - fx;
      const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
      for (std::size_t ch = 0; ch < img.c; ++ch) {
        img.at(ch, y, x) = (1 - ty) * ((1 - tx) * sample(ch, y0, x0) + tx * sample(ch, y0, x0 + 1)) +
                           ty * ((1 - tx) * sample(ch, y0 + 1, x0) + tx * sample(ch, y0 + 1, x0 + 1));
      }
    }
  }
}

void erase(Image& img, Rng& rng) {
  const double area = static_cast<double>(img.h * img.w);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(0.02, 0.2);
    const double aspect = std::exp(rng.uniform(std::log(0.3), std::log(3.3)));
    const auto eh = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto ew = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (eh == 0 || ew == 0 || eh >= img.h || ew >= img.w) continue;
    const std::size_t y0 = rng.below(img.h - eh + 1), x0 = rng.below(img.w - ew + 1);
    for (std::size_t ch = 0; ch < img.c; ++ch) {
      for (std::size_t y = y0; y < y0 + eh; ++y) {
        for (std::size_t x = x0; x < x0 + ew; ++x) img.at(ch, y, x) = 0.0;
      }
    }
    return;
  }
}

}  // namespace

ad::Tensor augment(const ad::Tensor& batch, std::uint64_t seed, const AugmentSwitches& s) {
  if (batch.rank() != 4) throw ShapeError("augment: expected an N x C x H x W batch, got " + ad::to_string(batch.shape()));
  ad::Tensor out = batch.detach().clone();
  if (!s.any()) return out;
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  const bool degenerate = h < 2 || w < 2;
  for (std::size_t b = 0; b < n; ++b) {
    Image img{c, h, w, out.mutable_data().subspan(b * c * h * w, c * h * w)};
    Rng rng(derive_seed(seed, {b}));
    if (s.flip && rng.bernoulli(s.flip_probability)) flip(img);
    if (s.rotate && rng.bernoulli(s.probability)) rotate(img, rng.uniform(-15.0, 15.0));
    if (s.translate && rng.bernoulli(s.probability)) {
      const long dy = std::lround(rng.uniform(-0.1, 0.1) * static_cast<double>(h));
      const long dx = std::lround(rng.uniform(-0.1, 0.1) * static_cast<double>(w));
      shift(img, dy, dx);
    }
    if (s.crop && rng.bernoulli(s.probability) && !degenerate) {
      const long oy = static_cast<long>(rng.below(9)), ox = static_cast<long>(rng.below(9));
      shift(img, 4 - oy, 4 - ox);
    }
    if (s.erase && rng.bernoulli(s.probability) && !degenerate) erase(img, rng);
  }
  return out;
}

}  // namespace erde::train
