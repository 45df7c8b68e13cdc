// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "config.hpp"
#include "erde/data/dataset.hpp"
#include "erde/model/network.hpp"

namespace erde::cli {

namespace fs = std::filesystem;

struct PreparedData {
  data::Splits splits;
  data::ChannelStats stats;  // empty when standardization is off
  std::string provenance;
};

/// Loads or generates the pool, splits it and standardizes with training
/// statistics.
PreparedData prepare_data(const DataSection& data);

model::ArchConfig build_arch(const ArchSection& section, std::size_t channels, std::size_t height, std::size_t width,
                             std::size_t class_count);

/// A weight file plus the input standardization the model was trained with.
struct ModelFile {
  model::MultiExitNetwork net;
  data::ChannelStats stats;
};

void save_model(const fs::path& path, const model::MultiExitNetwork& net, const data::ChannelStats& stats);
ModelFile load_model(const fs::path& path);

/// Creates `dir`; refuses a nonempty existing directory unless `force`.
void prepare_output_dir(const fs::path& dir, bool force);

struct TrainArgs {
  fs::path config;
  fs::path out;
  bool force = false;
  std::string mode = "teacher";  // teacher, none, kd, erde
  std::optional<fs::path> teacher;
  bool quiet = false;
};

struct SweepArgs {
  fs::path model;
  std::string data = "synth";
  std::optional<fs::path> labels;
  std::optional<fs::path> config;
  std::optional<double> theta_min, theta_max;
  std::optional<std::size_t> steps;
  fs::path out;
  bool force = false;
  std::optional<fs::path> reference;
  std::string label = "model";
};

struct MacsArgs {
  std::optional<fs::path> config;
  std::optional<fs::path> model;
  std::string which = "model";  // model or teacher
};

struct EvalArgs {
  fs::path model;
  std::string data = "synth";
  std::optional<fs::path> labels;
  std::optional<fs::path> config;
  double theta = 0.0;
  std::size_t latency_repetitions = 0;
};

// Each command returns a process exit code and throws erde::Error on
// configuration, data or format failures.
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err);
int cmd_macs(const MacsArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);

}  // namespace erde::cli
