// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "desk_pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "commands.hpp"

namespace erde::acceptance {

namespace {

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

train::TrainConfig train_config(const cli::ExperimentConfig& c, train::TrainMode mode, std::uint64_t seed) {
  train::TrainConfig tc;
  tc.epochs = c.train.epochs;
  tc.batch_size = c.train.batch_size;
  tc.learning_rate = c.train.learning_rate;
  tc.seed = seed;
  tc.early_stop_patience = c.train.early_stop_patience;
  tc.mode = mode;
  tc.loss = c.loss;
  tc.augment = c.train.augment;
  for (std::size_t a : c.teacher.alignment) tc.alignment.push_back(a - 1);
  return tc;
}

std::vector<double> accuracies(const std::vector<exits::ExitTrace>& traces) {
  std::vector<double> acc(traces.front().exit_count, 0.0);
  for (const auto& t : traces) {
    for (std::size_t e = 0; e < t.exit_count; ++e) acc[e] += exits::argmax(t.exit_logits(e)) == t.label;
  }
  for (double& a : acc) a /= static_cast<double>(traces.size());
  return acc;
}

exits::SweepReport sweep_traces(const std::vector<exits::ExitTrace>& traces, const cli::ExperimentConfig& c) {
  const auto grid = exits::theta_grid(c.sweep.theta_min, c.resolved_theta_max(), c.sweep.steps);
  return exits::sweep(traces, grid, 1);
}

}  // namespace

DeskOutcome run_desk(const cli::ExperimentConfig& config, const std::vector<std::uint64_t>& seeds, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  DeskOutcome out;
  const cli::PreparedData prepared = cli::prepare_data(config.data);
  const data::Dataset& tr = prepared.splits.train;
  out.test = prepared.splits.test;
  const std::size_t k = config.data.class_count;

  auto t0 = std::chrono::steady_clock::now();
  model::MultiExitNetwork teacher(cli::build_arch(config.teacher, tr.channels(), tr.height(), tr.width(), k));
  (void)train::train(teacher, nullptr, tr, prepared.splits.val,
                     train_config(config, train::TrainMode::teacher, config.train.seed));
  const auto teacher_traces = exits::trace_dataset(teacher, out.test);
  out.teacher_test_acc = accuracies(teacher_traces);
  out.teacher_csv = exits::to_csv(sweep_traces(teacher_traces, config));
  out.teacher_seconds = elapsed(t0);
  char buf[256];
  std::snprintf(buf, sizeof buf, "  teacher trained in %.1f s, test accuracy per exit:", out.teacher_seconds);
  log << buf;
  for (double a : out.teacher_test_acc) log << " " << a;
  log << "\n" << std::flush;

  const std::size_t aligned = config.teacher.alignment.empty() ? 0 : config.teacher.alignment.front() - 1;
  std::vector<bool> wrong(out.test.size()), final_wrong(out.test.size());
  for (std::size_t i = 0; i < out.test.size(); ++i) {
    wrong[i] = exits::argmax(teacher_traces[i].exit_logits(aligned)) != out.test.label(i);
    final_wrong[i] = exits::argmax(teacher_traces[i].exit_logits(teacher.exit_count() - 1)) != out.test.label(i);
  }

  for (std::uint64_t seed : seeds) {
    for (train::TrainMode mode : {train::TrainMode::student_kd, train::TrainMode::student_erde}) {
      t0 = std::chrono::steady_clock::now();
      cli::ArchSection section = config.model;
      section.seed = seed;
      StudentOutcome s;
      s.seed = seed;
      s.mode = mode;
      s.net.emplace(cli::build_arch(section, tr.channels(), tr.height(), tr.width(), k));
      (void)train::train(*s.net, &teacher, tr, prepared.splits.val, train_config(config, mode, seed));
      const auto traces = exits::trace_dataset(*s.net, out.test);
      s.test_acc_per_exit = accuracies(traces);
      double sum = 0.0, final_sum = 0.0;
      std::size_t final_count = 0;
      for (std::size_t i = 0; i < traces.size(); ++i) {
        if (wrong[i]) {
          sum += traces[i].entropy[0];
          ++s.wrong_count;
        }
        if (final_wrong[i]) {
          final_sum += traces[i].entropy[0];
          ++final_count;
        }
      }
      s.wrong_entropy = s.wrong_count ? sum / static_cast<double>(s.wrong_count) : 0.0;
      s.final_wrong_entropy = final_count ? final_sum / static_cast<double>(final_count) : 0.0;
      s.sweep = sweep_traces(traces, config);
      s.csv = exits::to_csv(s.sweep);
      s.seconds = elapsed(t0);
      std::snprintf(buf, sizeof buf,
                    "  seed %llu %-4s final acc %.4f  exit-1 entropy on %zu teacher-wrong: %.4f  (%.1f s)\n",
                    static_cast<unsigned long long>(seed), std::string(train::to_string(mode)).c_str(),
                    s.test_acc_per_exit.back(), s.wrong_count, s.wrong_entropy, s.seconds);
      log << buf << std::flush;
      (mode == train::TrainMode::student_kd ? out.kd : out.erde).push_back(std::move(s));
    }
  }
  out.seconds = elapsed(start);
  return out;
}

}  // namespace erde::acceptance
