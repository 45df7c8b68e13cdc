// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "erde/data/dataset.hpp"
#include "erde/losses/losses.hpp"
#include "erde/model/network.hpp"
#include "erde/train/augment.hpp"

namespace erde::train {

enum class TrainMode { teacher, student_no_kd, student_kd, student_erde };

std::string_view to_string(TrainMode mode);
/// Accepts teacher, none / no_kd, kd and erde.
TrainMode parse_train_mode(std::string_view text);
bool needs_teacher(TrainMode mode);
/// Human-readable name of the objective minimized in `mode`.
std::string loss_formula(TrainMode mode, const losses::LossWeights& weights);

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// Stop after this many epochs without a new best final-exit validation
  /// accuracy; 0 disables early stopping.
  std::size_t early_stop_patience = 20;
  TrainMode mode = TrainMode::teacher;
  losses::LossWeights loss;
  losses::ExitAlignment alignment;
  AugmentSwitches augment;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::vector<double> val_acc_per_exit;
  double best_so_far = 0.0;  // best final-exit validation accuracy up to this epoch
};

struct TrainLog {
  std::string loss_formula;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  bool stopped_early = false;

  /// One JSON object per epoch.
  std::string to_ndjson() const;
};

/// Per-exit accuracy of `net` in eval mode.
std::vector<double> exit_accuracies(const model::MultiExitNetwork& net, const data::Dataset& dataset,
                                    std::size_t batch_size = 256);

/// Jointly trains every exit of `net` with Adam. KD and ERDE modes read the
/// frozen `teacher` in eval mode. With a nonempty validation set the weights
/// of the best epoch are restored at the end.
TrainLog train(model::MultiExitNetwork& net, const model::MultiExitNetwork* teacher, const data::Dataset& train_set,
               const data::Dataset& val_set, const TrainConfig& config,
               const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace erde::train
