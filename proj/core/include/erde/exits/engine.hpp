// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "erde/data/dataset.hpp"
#include "erde/model/network.hpp"

namespace erde::exits {

using MacCount = std::uint64_t;

MacCount conv_macs(std::size_t c_out, std::size_t h_out, std::size_t w_out, std::size_t c_in, std::size_t kh,
                   std::size_t kw);
MacCount fc_macs(std::size_t in_features, std::size_t out_features);

struct LayerMacs {
  std::string name;  // e.g. "block1.conv1", "head2.fc"
  std::string kind;  // "conv" or "fc"
  std::string shape;  // "C_in->C_out kxk @HxW" or "in->out"
  MacCount macs = 0;
};

/// Conv and FC multiply-accumulates per layer; BN, ReLU, pooling and
/// dropout count as zero.
struct MacTable {
  std::vector<LayerMacs> layers;
  std::vector<MacCount> block;  // per block
  std::vector<MacCount> head;   // per exit head
  /// cumulative[i]: blocks 0..i plus heads 0..i, the cost of leaving at exit i.
  std::vector<MacCount> cumulative;

  MacCount total() const { return cumulative.empty() ? 0 : cumulative.back(); }
  std::size_t exit_count() const { return block.size(); }
};

MacTable mac_count(const model::ArchConfig& arch);

/// Shannon entropy (nats) of softmax(logits), clamped to [0, ln K].
double entropy_score(std::span<const double> logits);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

struct ExitDecision {
  int prediction = 0;
  std::size_t exit_index = 0;  // 1-based
  MacCount macs = 0;
};

/// Runs block 1 and head 1, then continues while the exit entropy exceeds
/// `theta`; the last exit always terminates. `example` is 1 x C x H x W.
ExitDecision early_exit_infer(const model::MultiExitNetwork& net, const ad::Tensor& example, double theta,
                              const MacTable& macs);
ExitDecision early_exit_infer(const model::MultiExitNetwork& net, const ad::Tensor& example, double theta);

struct ExitTrace {
  std::size_t exit_count = 0;
  std::size_t class_count = 0;
  std::vector<double> logits;  // exit_count x class_count
  std::vector<double> entropy;
  std::vector<MacCount> cumulative_macs;
  int label = 0;

  std::span<const double> exit_logits(std::size_t exit) const {
    return std::span<const double>(logits).subspan(exit * class_count, class_count);
  }
};

struct TraceOptions {
  std::size_t threads = 1;
  std::size_t batch_size = 64;
};

/// Eval-mode forward of every exit for every example. Results do not depend
/// on the batch size or thread count.
std::vector<ExitTrace> trace_dataset(const model::MultiExitNetwork& net, const data::Dataset& dataset,
                                     const TraceOptions& options = {});

/// min{i : c_i <= theta} with the last exit as fallback (0-based).
std::size_t chosen_exit(const ExitTrace& trace, double theta);

/// `steps` evenly spaced values from lo to hi inclusive (lo alone if steps == 1).
std::vector<double> theta_grid(double lo, double hi, std::size_t steps);

struct SweepRow {
  double theta = 0.0;
  std::uint64_t correct = 0;
  std::uint64_t examples = 0;
  MacCount mac_sum = 0;
  std::vector<std::uint64_t> exit_histogram;
  std::uint64_t exit_index_sum = 0;  // 1-based indices

  double accuracy() const;
  double avg_macs() const;
  double mean_exit_index() const;
  bool operator==(const SweepRow&) const = default;
};

struct SweepReport {
  std::size_t exit_count = 0;
  std::vector<SweepRow> rows;
  MacCount full_network_macs = 0;
  std::string model_provenance;
  std::string dataset_provenance;
};

SweepReport sweep(std::span<const ExitTrace> traces, std::span<const double> thetas, std::size_t threads = 1);

std::string to_csv(const SweepReport& report);
std::string to_json(const SweepReport& report);

/// `value` as a percentage of `reference` with one decimal, e.g. "21.9%".
std::string relative_macs(double value, double reference);

/// One results-table line: approach, accuracy, MACs, MACs relative to a
/// named reference model.
std::string table_row(const std::string& approach, double accuracy, double macs, double reference_macs);

struct LatencyReport {
  std::size_t repetitions = 0;
  std::size_t samples = 0;
  double mean_seconds = 0.0;
  double stddev_seconds = 0.0;
  std::string host;
};

/// Wall-clock time per example at batch size 1, including batch
/// materialization. `warmup` passes are run and discarded first.
LatencyReport latency_probe(const model::MultiExitNetwork& net, const data::Dataset& dataset, double theta,
                            std::size_t repetitions, std::size_t warmup = 1);

std::string host_descriptor();

/// Worker count from ERDE_THREADS (default 1).
std::size_t threads_from_env();

}  // namespace erde::exits
