// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/train/adam.hpp"

#include <cmath>

#include "erde/error.hpp"

namespace erde::train {

Adam::Adam(std::vector<model::NamedTensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ConfigError("adam: betas must be in [0, 1)");
  }
  moments_.reserve(params_.size());
  for (const auto& p : params_) {
    moments_.push_back({std::vector<double>(p.tensor.size(), 0.0), std::vector<double>(p.tensor.size(), 0.0)});
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (p.tensor.requires_grad() && !p.tensor.has_grad()) {
      throw Error("adam: missing gradient for parameter " + p.name);
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Tensor param = params_[i].tensor;
    if (!param.requires_grad()) continue;
    auto value = param.mutable_data();
    const auto grad = param.grad();
    auto& [m, v] = moments_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      value[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace erde::train
