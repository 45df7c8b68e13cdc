// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "erde/error.hpp"
#include "erde/version.hpp"

int main(int argc, char** argv) {
  using namespace erde::cli;
  CLI::App app{"Multi-exit distillation experiments: training, MAC counts and threshold sweeps"};
  app.set_version_flag("--version", std::string(erde::version()));
  app.require_subcommand(1);

  TrainArgs teacher_args;
  auto* teacher = app.add_subcommand("train-teacher", "Train a multi-exit teacher with joint cross entropy");
  teacher->add_option("--config", teacher_args.config, "Experiment config")->required()->check(CLI::ExistingFile);
  teacher->add_option("--out", teacher_args.out, "Output directory")->required();
  teacher->add_flag("--force", teacher_args.force, "Overwrite a nonempty output directory");
  teacher->add_flag("--quiet", teacher_args.quiet, "No per-epoch lines");

  TrainArgs student_args;
  student_args.mode = "erde";
  auto* student = app.add_subcommand("train-student", "Train a multi-exit student (none, kd or erde)");
  student->add_option("--config", student_args.config, "Experiment config")->required()->check(CLI::ExistingFile);
  student->add_option("--out", student_args.out, "Output directory")->required();
  student->add_option("--mode", student_args.mode, "Objective")
      ->check(CLI::IsMember({"none", "kd", "erde"}))
      ->capture_default_str();
  student->add_option("--teacher", student_args.teacher, "Teacher weights")->check(CLI::ExistingFile);
  student->add_flag("--force", student_args.force, "Overwrite a nonempty output directory");
  student->add_flag("--quiet", student_args.quiet, "No per-epoch lines");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Accuracy and average MACs over a grid of entropy thresholds");
  sweep->add_option("--model", sweep_args.model, "Weights")->required()->check(CLI::ExistingFile);
  sweep->add_option("--data", sweep_args.data, "'synth' or a CIFAR .bin / IDX image file")->capture_default_str();
  sweep->add_option("--labels", sweep_args.labels, "IDX label file");
  sweep->add_option("--config", sweep_args.config, "Config for synth data and sweep defaults");
  sweep->add_option("--theta-min", sweep_args.theta_min, "Smallest threshold (nats)");
  sweep->add_option("--theta-max", sweep_args.theta_max, "Largest threshold (nats, default ln K)");
  sweep->add_option("--steps", sweep_args.steps, "Grid size");
  sweep->add_option("--out", sweep_args.out, "Output directory")->required();
  sweep->add_option("--reference", sweep_args.reference, "Reference model for relative MACs")->check(CLI::ExistingFile);
  sweep->add_option("--label", sweep_args.label, "Approach name in the table")->capture_default_str();
  sweep->add_flag("--force", sweep_args.force, "Overwrite a nonempty output directory");

  MacsArgs macs_args;
  auto* macs = app.add_subcommand("macs", "Per-layer multiply-accumulate table");
  macs->add_option("--config", macs_args.config, "Experiment config")->check(CLI::ExistingFile);
  macs->add_option("--model", macs_args.model, "Weights")->check(CLI::ExistingFile);
  macs->add_option("--which", macs_args.which, "Config architecture")
      ->check(CLI::IsMember({"model", "teacher"}))
      ->capture_default_str();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate early-exit inference at one threshold");
  eval->add_option("--model", eval_args.model, "Weights")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_args.data, "'synth' or a CIFAR .bin / IDX image file")->capture_default_str();
  eval->add_option("--labels", eval_args.labels, "IDX label file");
  eval->add_option("--config", eval_args.config, "Config for synth data");
  eval->add_option("--theta", eval_args.theta, "Entropy threshold (nats)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  eval->add_option("--latency", eval_args.latency_repetitions, "Latency probe repetitions (0: off)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (teacher->parsed()) return cmd_train(teacher_args, std::cout, std::cerr);
    if (student->parsed()) return cmd_train(student_args, std::cout, std::cerr);
    if (sweep->parsed()) return cmd_sweep(sweep_args, std::cout, std::cerr);
    if (macs->parsed()) return cmd_macs(macs_args, std::cout, std::cerr);
    if (eval->parsed()) return cmd_eval(eval_args, std::cout, std::cerr);
  } catch (const erde::Error& e) {
    std::cerr << "erde: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "erde: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
