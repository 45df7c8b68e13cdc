// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"
#include "erde/data/dataset.hpp"
#include "erde/exits/engine.hpp"
#include "erde/model/network.hpp"
#include "erde/train/trainer.hpp"

namespace erde::acceptance {

struct StudentOutcome {
  std::uint64_t seed = 0;
  train::TrainMode mode = train::TrainMode::student_kd;
  std::vector<double> test_acc_per_exit;
  /// Mean exit-1 entropy over test examples the aligned teacher exit gets wrong.
  double wrong_entropy = 0.0;
  std::size_t wrong_count = 0;
  /// Same, restricted to examples the teacher's final exit gets wrong.
  double final_wrong_entropy = 0.0;
  exits::SweepReport sweep;
  std::string csv;
  double seconds = 0.0;
  std::optional<model::MultiExitNetwork> net;
};

struct DeskOutcome {
  std::vector<double> teacher_test_acc;
  std::string teacher_csv;
  std::vector<StudentOutcome> kd, erde;
  data::Dataset test;
  double teacher_seconds = 0.0;
  double seconds = 0.0;
};

/// Trains the teacher once, then a KD and an ERDE student per seed (sharing
/// the seed's initialization), and sweeps every model on the test split.
DeskOutcome run_desk(const cli::ExperimentConfig& config, const std::vector<std::uint64_t>& seeds, std::ostream& log);

}  // namespace erde::acceptance
