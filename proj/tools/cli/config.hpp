// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "erde/losses/losses.hpp"
#include "erde/model/network.hpp"
#include "erde/train/augment.hpp"

namespace erde::cli {

struct DataSection {
  std::string source = "synth";  // synth, cifar or idx
  std::vector<std::string> paths;  // cifar batches
  std::string images, labels;      // idx files
  std::size_t class_count = 4;
  std::size_t count = 2800;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise_sigma = 1.6;
  std::uint64_t seed = 0;
  std::size_t train = 2000;
  std::size_t val = 400;
  std::size_t test = 400;
  std::uint64_t split_seed = 0;
  bool standardize = true;
};

struct ArchSection {
  std::string preset = "tiny6";
  std::size_t width = 4;
  model::BlockKind kind = model::BlockKind::plain_conv;
  double dropout = 0.5;
  std::uint64_t seed = 0;
};

struct TeacherSection : ArchSection {
  /// Teacher exit for each student exit, 1-based; empty means identity.
  std::vector<std::size_t> alignment;
};

struct TrainSection {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 20;
  train::AugmentSwitches augment;
};

struct SweepSection {
  double theta_min = 0.0;
  double theta_max = -1.0;  // negative: ln K of the data
  std::size_t steps = 100;
};

struct ExperimentConfig {
  DataSection data;
  ArchSection model;
  TeacherSection teacher;
  TrainSection train;
  losses::LossWeights loss;
  SweepSection sweep;

  ExperimentConfig() {
    teacher.preset = "tiny8";
    teacher.width = 8;
  }

  /// Cross-field checks; throws ConfigError.
  void validate() const;

  double resolved_theta_max() const;
};

/// Parses `[section]` headers and `key = value` lines. '#' and ';' start
/// comments. Unknown sections or keys, duplicates and malformed values throw
/// ConfigError naming `origin`, the line and the key.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value, in the accepted grammar.
std::string to_ini(const ExperimentConfig& config);

}  // namespace erde::cli
