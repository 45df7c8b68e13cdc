// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "erde/autodiff/tensor.hpp"
#include "erde/rng.hpp"

namespace erde::testing {

using ad::Tensor;

/// Leaves to differentiate and a scalar function of them.
struct GradInstance {
  std::vector<Tensor> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> loss;
};

struct GradCase {
  std::string name;
  std::function<GradInstance(Rng&)> make;
};

/// Every differentiable primitive and every loss, each with a random-shape
/// instance generator. Non-scalar op outputs are reduced with a fixed random
/// projection.
const std::vector<GradCase>& gradient_cases();

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t instances = 0;
  std::size_t checked_entries = 0;
  std::string worst;
};

/// Compares tape gradients with central differences (step h) for every
/// input entry. Relative error is |a - n| / max(|a|, |n|, floor).
GradReport gradcheck(const GradInstance& instance, double h = 1e-5, double floor = 1e-6);

GradReport run_case(const GradCase& c, std::size_t instances, std::uint64_t seed, double h = 1e-5);

}  // namespace erde::testing
