// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/exits/engine.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "erde/error.hpp"
#include "erde/version.hpp"

namespace erde::exits {

MacCount conv_macs(std::size_t c_out, std::size_t h_out, std::size_t w_out, std::size_t c_in, std::size_t kh,
                   std::size_t kw) {
  return MacCount{c_out} * h_out * w_out * c_in * kh * kw;
}

MacCount fc_macs(std::size_t in_features, std::size_t out_features) { return MacCount{in_features} * out_features; }

MacTable mac_count(const model::ArchConfig& arch) {
  arch.validate();
  const auto geometry = model::stage_geometry(arch);
  MacTable table;
  MacCount running = 0;
  std::size_t h = arch.height, w = arch.width;
  for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
    const model::BlockSpec& b = arch.blocks[i];
    const std::string prefix = "block" + std::to_string(i + 1);
    const std::size_t oh = geometry[i].height, ow = geometry[i].width;
    MacCount block = 0;
    std::size_t c_in = b.in_channels;
    for (std::size_t j = 0; j < b.conv_count; ++j) {
      const MacCount m = conv_macs(b.out_channels, oh, ow, c_in, 3, 3);
      const std::size_t in_h = j == 0 ? h : oh, in_w = j == 0 ? w : ow;
      table.layers.push_back({prefix + ".conv" + std::to_string(j + 1), "conv",
                              std::to_string(c_in) + "->" + std::to_string(b.out_channels) + " 3x3 @" +
                                  std::to_string(in_h) + "x" + std::to_string(in_w),
                              m});
      block += m;
      c_in = b.out_channels;
    }
    if (b.kind == model::BlockKind::residual && (b.in_channels != b.out_channels || b.stride != 1)) {
      const MacCount m = conv_macs(b.out_channels, oh, ow, b.in_channels, 1, 1);
      table.layers.push_back({prefix + ".proj", "conv",
                              std::to_string(b.in_channels) + "->" + std::to_string(b.out_channels) + " 1x1 @" +
                                  std::to_string(h) + "x" + std::to_string(w),
                              m});
      block += m;
    }
    const MacCount head = fc_macs(geometry[i].head_features, arch.class_count);
    table.layers.push_back({"head" + std::to_string(i + 1) + ".fc", "fc",
                            std::to_string(geometry[i].head_features) + "->" + std::to_string(arch.class_count),
                            head});
    table.block.push_back(block);
    table.head.push_back(head);
    running += block + head;
    table.cumulative.push_back(running);
    h = oh;
    w = ow;
  }
  return table;
}

double entropy_score(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("entropy_score: empty logits");
  for (double z : logits) {
    if (!std::isfinite(z)) throw NonFiniteError("entropy_score: non-finite logit");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  const double log_s = std::log(s);
  double h = 0.0;
  for (double z : logits) {
    const double log_p = z - m - log_s;
    const double p = std::exp(log_p);
    if (p > 0.0) h -= p * log_p;
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(logits.size())));
}

int argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

ExitDecision early_exit_infer(const model::MultiExitNetwork& net, const ad::Tensor& example, double theta,
                              const MacTable& macs) {
  if (!(theta >= 0.0)) throw ConfigError("early_exit_infer: theta must be nonnegative");
  net.check_input(example);
  if (example.dim(0) != 1) throw ShapeError("early_exit_infer: expected a single example");
  if (macs.exit_count() != net.exit_count()) throw ShapeError("early_exit_infer: MAC table does not match network");
  ad::Tape::Pause no_grad;
  ad::Tensor h = example;
  const std::size_t n = net.exit_count();
  for (std::size_t i = 0; i < n; ++i) {
    h = net.forward_block(i, h, model::Mode::eval);
    const ad::Tensor logits = net.forward_head(i, h, model::Mode::eval);
    if (i + 1 == n || entropy_score(logits.data()) <= theta) {
      return {argmax(logits.data()), i + 1, macs.cumulative[i]};
    }
  }
  return {};
}

ExitDecision early_exit_infer(const model::MultiExitNetwork& net, const ad::Tensor& example, double theta) {
  return early_exit_infer(net, example, theta, mac_count(net.arch()));
}

namespace {

template <typename Fn>
void parallel_chunks(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    fn(0, 0, count);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = count * t / threads, hi = count * (t + 1) / threads;
    workers.emplace_back([&, t, lo, hi] {
      try {
        fn(t, lo, hi);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<ExitTrace> trace_dataset(const model::MultiExitNetwork& net, const data::Dataset& dataset,
                                     const TraceOptions& options) {
  const MacTable macs = mac_count(net.arch());
  const std::size_t n = net.exit_count(), k = net.class_count();
  if (dataset.class_count() > k) throw ShapeError("trace_dataset: dataset has more classes than the network");
  std::vector<ExitTrace> traces(dataset.size());
  const std::size_t batch_size = std::max<std::size_t>(1, options.batch_size);
  parallel_chunks(dataset.size(), options.threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
    ad::Tape::Pause no_grad;
    std::vector<std::size_t> idx;
    for (std::size_t start = lo; start < hi; start += batch_size) {
      const std::size_t stop = std::min(hi, start + batch_size);
      idx.resize(stop - start);
      std::iota(idx.begin(), idx.end(), start);
      const auto logits = net.forward_all_exits(dataset.batch(idx), model::Mode::eval);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        ExitTrace& t = traces[idx[b]];
        t.exit_count = n;
        t.class_count = k;
        t.label = dataset.label(idx[b]);
        t.logits.resize(n * k);
        t.entropy.resize(n);
        t.cumulative_macs = macs.cumulative;
        for (std::size_t e = 0; e < n; ++e) {
          std::copy_n(logits[e].data().begin() + static_cast<std::ptrdiff_t>(b * k), k,
                      t.logits.begin() + static_cast<std::ptrdiff_t>(e * k));
          t.entropy[e] = entropy_score(t.exit_logits(e));
        }
      }
    }
  });
  return traces;
}

std::size_t chosen_exit(const ExitTrace& trace, double theta) {
  for (std::size_t i = 0; i + 1 < trace.exit_count; ++i) {
    if (trace.entropy[i] <= theta) return i;
  }
  return trace.exit_count - 1;
}

std::vector<double> theta_grid(double lo, double hi, std::size_t steps) {
  if (!(lo >= 0.0)) throw ConfigError("theta grid: theta-min must be >= 0");
  if (steps < 1) throw ConfigError("theta grid: steps must be >= 1");
  if (!(hi >= lo)) throw ConfigError("theta grid: theta-max must be >= theta-min");
  if (steps == 1) return {lo};
  std::vector<double> out(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  out.back() = hi;
  return out;
}

double SweepRow::accuracy() const {
  return examples ? static_cast<double>(correct) / static_cast<double>(examples) : 0.0;
}
double SweepRow::avg_macs() const {
  return examples ? static_cast<double>(mac_sum) / static_cast<double>(examples) : 0.0;
}
double SweepRow::mean_exit_index() const {
  return examples ? static_cast<double>(exit_index_sum) / static_cast<double>(examples) : 0.0;
}

SweepReport sweep(std::span<const ExitTrace> traces, std::span<const double> thetas, std::size_t threads) {
  if (thetas.empty()) throw ConfigError("sweep: empty theta grid");
  if (traces.empty()) throw ConfigError("sweep: no traces");
  for (double t : thetas) {
    if (!(t >= 0.0)) throw ConfigError("sweep: theta values must be nonnegative");
  }
  const std::size_t n = traces.front().exit_count;
  for (const ExitTrace& t : traces) {
    if (t.exit_count != n) throw ShapeError("sweep: traces disagree on exit count");
  }
  auto empty_rows = [&] {
    std::vector<SweepRow> rows(thetas.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      rows[r].theta = thetas[r];
      rows[r].exit_histogram.assign(n, 0);
    }
    return rows;
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, traces.size()));
  std::vector<std::vector<SweepRow>> partial(workers, empty_rows());
  parallel_chunks(traces.size(), workers, [&](std::size_t worker, std::size_t lo, std::size_t hi) {
    auto& rows = partial[worker];
    for (std::size_t e = lo; e < hi; ++e) {
      const ExitTrace& t = traces[e];
      for (SweepRow& row : rows) {
        const std::size_t i = chosen_exit(t, row.theta);
        row.examples += 1;
        row.correct += argmax(t.exit_logits(i)) == t.label ? 1 : 0;
        row.mac_sum += t.cumulative_macs[i];
        row.exit_histogram[i] += 1;
        row.exit_index_sum += i + 1;
      }
    }
  });
  SweepReport report;
  report.exit_count = n;
  report.full_network_macs = traces.front().cumulative_macs.back();
  report.rows = empty_rows();
  for (const auto& rows : partial) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      SweepRow& out = report.rows[r];
      out.examples += rows[r].examples;
      out.correct += rows[r].correct;
      out.mac_sum += rows[r].mac_sum;
      out.exit_index_sum += rows[r].exit_index_sum;
      for (std::size_t i = 0; i < n; ++i) out.exit_histogram[i] += rows[r].exit_histogram[i];
    }
  }
  return report;
}

namespace {

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

}  // namespace

std::string to_csv(const SweepReport& report) {
  std::string out = "theta,accuracy,avg_macs";
  for (std::size_t i = 0; i < report.exit_count; ++i) out += ",exit_" + std::to_string(i + 1) + "_count";
  out += ",mean_exit_index\n";
  for (const SweepRow& row : report.rows) {
    out += fmt("%.9g", row.theta) + "," + fmt("%.6f", row.accuracy()) + "," + fmt("%.4f", row.avg_macs());
    for (auto c : row.exit_histogram) out += "," + std::to_string(c);
    out += "," + fmt("%.6f", row.mean_exit_index()) + "\n";
  }
  return out;
}

std::string to_json(const SweepReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const SweepRow& row : report.rows) {
    rows.push_back({{"theta", row.theta},
                    {"accuracy", row.accuracy()},
                    {"avg_macs", row.avg_macs()},
                    {"exit_histogram", row.exit_histogram},
                    {"mean_exit_index", row.mean_exit_index()},
                    {"correct", row.correct},
                    {"examples", row.examples},
                    {"mac_sum", row.mac_sum}});
  }
  nlohmann::ordered_json doc = {
      {"exit_count", report.exit_count},
      {"full_network_macs", report.full_network_macs},
      {"rows", rows},
      {"provenance",
       {{"model", report.model_provenance}, {"dataset", report.dataset_provenance}, {"erde_version", std::string(erde::version())}}},
  };
  return doc.dump(2) + "\n";
}

std::string relative_macs(double value, double reference) {
  if (!(reference > 0.0)) throw ConfigError("relative MACs: reference must be positive");
  return fmt("%.1f", 100.0 * value / reference) + "%";
}

std::string table_row(const std::string& approach, double accuracy, double macs, double reference_macs) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %8.4f %14.1f %8s", approach.c_str(), accuracy, macs,
                relative_macs(macs, reference_macs).c_str());
  return buf;
}

std::string host_descriptor() {
  std::string out;
  utsname info{};
  if (uname(&info) == 0) {
    out = std::string(info.sysname) + " " + info.release + " " + info.machine;
  } else {
    out = "unknown-os";
  }
  out += ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
#if defined(__clang__)
  out += ", clang " __clang_version__;
#elif defined(__GNUC__)
  out += ", gcc " __VERSION__;
#endif
  return out;
}

LatencyReport latency_probe(const model::MultiExitNetwork& net, const data::Dataset& dataset, double theta,
                            std::size_t repetitions, std::size_t warmup) {
  LatencyReport report;
  report.host = host_descriptor();
  report.repetitions = repetitions;
  if (repetitions == 0 || dataset.empty()) return report;
  const MacTable macs = mac_count(net.arch());
  auto run_one = [&](std::size_t i) {
    const std::size_t idx[1] = {i};
    return early_exit_infer(net, dataset.batch(idx), theta, macs);
  };
  for (std::size_t w = 0; w < warmup; ++w) {
    for (std::size_t i = 0; i < dataset.size(); ++i) run_one(i);
  }
  std::vector<double> samples;
  samples.reserve(repetitions * dataset.size());
  for (std::size_t r = 0; r < repetitions; ++r) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto start = std::chrono::steady_clock::now();
      run_one(i);
      samples.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
  }
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  report.samples = samples.size();
  report.mean_seconds = mean;
  report.stddev_seconds = samples.size() > 1 ? std::sqrt(ss / static_cast<double>(samples.size() - 1)) : 0.0;
  return report;
}

std::size_t threads_from_env() {
  const char* value = std::getenv("ERDE_THREADS");
  if (value == nullptr || *value == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(value, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("ERDE_THREADS must be a positive integer, got '" + std::string(value) + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace erde::exits
