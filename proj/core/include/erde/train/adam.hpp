// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "erde/model/network.hpp"

namespace erde::train {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  Adam(std::vector<model::NamedTensor> params, AdamConfig config = {});

  /// Applies one update from the parameters' current gradients. Throws if a
  /// trainable parameter has no gradient.
  void step();

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<model::NamedTensor>& params() const { return params_; }
  const std::vector<Moments>& moments() const { return moments_; }

 private:
  std::vector<model::NamedTensor> params_;
  std::vector<Moments> moments_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

}  // namespace erde::train
