// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "erde/autodiff/tensor.hpp"

namespace erde::train {

/// Enabled transforms run in this order, each applied with its own probability:
/// horizontal flip, rotation in [-15, 15] degrees (bilinear, zero fill),
/// translation up to 10% per axis (whole pixels), zero-pad-4 random crop,
/// random erasing of 2-20% of the area (aspect 0.3-3.3, fill 0).
struct AugmentSwitches {
  bool flip = false;
  bool rotate = false;
  bool translate = false;
  bool crop = false;
  bool erase = false;
  double flip_probability = 0.5;
  double probability = 0.5;  // rotation, translation, crop and erasing

  bool any() const { return flip || rotate || translate || crop || erase; }
};

/// Augments an N x C x H x W batch. Image b draws from a stream derived from
/// (seed, b), so results do not depend on how batches are scheduled.
ad::Tensor augment(const ad::Tensor& batch, std::uint64_t seed, const AugmentSwitches& switches);

}  // namespace erde::train
