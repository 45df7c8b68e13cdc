// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "erde/error.hpp"
#include "erde/exits/engine.hpp"
#include "erde/model/weights_io.hpp"
#include "erde/train/trainer.hpp"
#include "erde/version.hpp"

namespace erde::cli {

namespace {

using nlohmann::ordered_json;

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string synth_provenance(const DataSection& d) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "synth(K=%zu, count=%zu, %zux%zu, sigma=%g, seed=%llu)", d.class_count, d.count,
                d.height, d.width, d.noise_sigma, static_cast<unsigned long long>(d.seed));
  return buf;
}

data::Dataset load_pool(const DataSection& d, std::string& provenance) {
  if (d.source == "synth") {
    provenance = synth_provenance(d);
    return data::synth_generate({d.class_count, d.count, d.height, d.width, d.noise_sigma, d.seed});
  }
  if (d.source == "cifar") {
    std::vector<fs::path> paths(d.paths.begin(), d.paths.end());
    data::Dataset ds = data::load_cifar_binary(paths, d.class_count);
    provenance = ds.meta().provenance;
    return ds;
  }
  data::Dataset ds = data::load_idx(d.images, d.labels, d.class_count);
  provenance = ds.meta().provenance;
  return ds;
}

std::vector<std::size_t> zero_based(const std::vector<std::size_t>& one_based) {
  std::vector<std::size_t> out;
  for (std::size_t a : one_based) out.push_back(a - 1);
  return out;
}

ordered_json arch_json(const model::ArchConfig& a) {
  ordered_json blocks = ordered_json::array();
  for (const auto& b : a.blocks) {
    blocks.push_back({{"kind", std::string(model::to_string(b.kind))},
                      {"in", b.in_channels},
                      {"out", b.out_channels},
                      {"stride", b.stride},
                      {"convs", b.conv_count}});
  }
  return {{"input", {a.in_channels, a.height, a.width}},
          {"class_count", a.class_count},
          {"dropout", a.dropout_p},
          {"seed", a.seed},
          {"blocks", blocks}};
}

std::vector<exits::MacCount> cumulative_macs(const model::ArchConfig& arch) { return exits::mac_count(arch).cumulative; }

// Evaluation data for sweep / eval: the test split of a synthetic config, or
// an external CIFAR (.bin) or IDX file, standardized with the model's stats.
data::Dataset evaluation_data(const std::string& spec, const std::optional<fs::path>& labels,
                              const std::optional<fs::path>& config_path, const fs::path& model_path,
                              const ModelFile& model, std::string& provenance) {
  data::Dataset ds;
  const std::size_t k = model.net.class_count();
  if (spec == "synth") {
    fs::path cfg;
    if (config_path) {
      cfg = *config_path;
    } else if (fs::exists(model_path.parent_path() / "config.ini")) {
      cfg = model_path.parent_path() / "config.ini";
    }
    DataSection d = cfg.empty() ? DataSection{} : load_config(cfg).data;
    if (d.source != "synth") throw ConfigError("--data synth needs a config whose [data] source is synth");
    d.standardize = false;
    PreparedData prepared = prepare_data(d);
    ds = std::move(prepared.splits.test);
    provenance = prepared.provenance + " test split";
    if (ds.empty()) throw ConfigError("--data synth: the config's test split is empty");
  } else {
    const fs::path path(spec);
    if (path.extension() == ".bin") {
      ds = data::load_cifar_binary({path}, k);
    } else {
      if (!labels) throw ConfigError("--data " + spec + ": IDX images need --labels");
      ds = data::load_idx(path, *labels, k);
    }
    provenance = ds.meta().provenance;
  }
  const auto& arch = model.net.arch();
  if (ds.channels() != arch.in_channels || ds.height() != arch.height || ds.width() != arch.width) {
    throw ConfigError("evaluation data is " + std::to_string(ds.channels()) + "x" + std::to_string(ds.height()) + "x" +
                      std::to_string(ds.width()) + " but the model expects " + std::to_string(arch.in_channels) + "x" +
                      std::to_string(arch.height) + "x" + std::to_string(arch.width));
  }
  if (!model.stats.mean.empty()) data::standardize(ds, model.stats);
  return ds;
}

std::string row_summary(const exits::SweepRow& row) {
  std::string hist;
  for (auto c : row.exit_histogram) hist += (hist.empty() ? "" : " ") + std::to_string(c);
  return "theta " + fmt("%.9g", row.theta) + "\nexamples " + std::to_string(row.examples) + "\naccuracy " +
         fmt("%.6f", row.accuracy()) + "\navg_macs " + fmt("%.4f", row.avg_macs()) + "\nexit_histogram " + hist +
         "\nmean_exit_index " + fmt("%.6f", row.mean_exit_index()) + "\n";
}

}  // namespace

PreparedData prepare_data(const DataSection& d) {
  PreparedData out;
  std::string provenance;
  const data::Dataset pool = load_pool(d, provenance);
  out.splits = data::split(pool, {d.train, d.val, d.test, d.split_seed});
  if (d.standardize) out.stats = data::standardize(out.splits);
  char buf[128];
  std::snprintf(buf, sizeof buf, " split(%zu/%zu/%zu, seed=%llu)", d.train, d.val, d.test,
                static_cast<unsigned long long>(d.split_seed));
  out.provenance = provenance + buf;
  return out;
}

model::ArchConfig build_arch(const ArchSection& s, std::size_t channels, std::size_t height, std::size_t width,
                             std::size_t class_count) {
  model::ArchConfig a = model::preset(s.preset, s.width, channels, height, width, class_count, s.kind);
  a.dropout_p = s.dropout;
  a.seed = s.seed;
  a.validate();
  return a;
}

void save_model(const fs::path& path, const model::MultiExitNetwork& net, const data::ChannelStats& stats) {
  auto tensors = model::to_archive(net);
  if (!stats.mean.empty()) {
    const auto c = static_cast<std::uint32_t>(stats.mean.size());
    tensors.push_back({"input.mean", model::DType::f64, {c}, stats.mean});
    tensors.push_back({"input.std", model::DType::f64, {c}, stats.std});
  }
  const auto bytes = model::encode_archive(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

ModelFile load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw model::WeightFileError(model::WeightFileError::Kind::io, "cannot open weights '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto tensors = model::decode_archive(bytes);
  ModelFile out{model::from_archive(tensors), {}};
  for (const auto& t : tensors) {
    if (t.name == "input.mean") out.stats.mean = t.values;
    if (t.name == "input.std") out.stats.std = t.values;
  }
  if (out.stats.mean.size() != out.stats.std.size()) out.stats = {};
  return out;
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory '" + dir.string() + "' is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = load_config(args.config);
  const train::TrainMode mode = train::parse_train_mode(args.mode);
  std::optional<ModelFile> teacher;
  if (train::needs_teacher(mode)) {
    if (!args.teacher) throw ConfigError("mode " + args.mode + " needs --teacher WEIGHTS");
    teacher = load_model(*args.teacher);
  } else if (args.teacher) {
    err << "warning: --teacher is ignored in mode " << train::to_string(mode) << "\n";
  }
  prepare_output_dir(args.out, args.force);

  const PreparedData prepared = prepare_data(config.data);
  const data::Dataset& tr = prepared.splits.train;
  const ArchSection& section = mode == train::TrainMode::teacher ? static_cast<const ArchSection&>(config.teacher)
                                                                 : config.model;
  model::MultiExitNetwork net(build_arch(section, tr.channels(), tr.height(), tr.width(), config.data.class_count));

  train::TrainConfig tc;
  tc.epochs = config.train.epochs;
  tc.batch_size = config.train.batch_size;
  tc.learning_rate = config.train.learning_rate;
  tc.seed = config.train.seed;
  tc.early_stop_patience = config.train.early_stop_patience;
  tc.mode = mode;
  tc.loss = config.loss;
  tc.augment = config.train.augment;
  if (teacher) {
    tc.alignment = zero_based(config.teacher.alignment);
    if (!teacher->stats.mean.empty() && teacher->stats.mean != prepared.stats.mean) {
      err << "warning: the teacher was trained with different input statistics\n";
    }
  }

  write_text(args.out / "config.ini", to_ini(config));
  const train::TrainLog log = train::train(net, teacher ? &teacher->net : nullptr, tr, prepared.splits.val, tc,
                                           [&](const train::EpochRecord& r) {
                                             if (args.quiet) return;
                                             out << "epoch " << r.epoch << " loss " << fmt("%.6f", r.train_loss)
                                                 << " val";
                                             for (double a : r.val_acc_per_exit) out << " " << fmt("%.4f", a);
                                             out << "\n";
                                           });
  save_model(args.out / "weights.bin", net, prepared.stats);
  write_text(args.out / "train_log.ndjson", log.to_ndjson());

  const std::vector<double> test_acc = train::exit_accuracies(net, prepared.splits.test);
  ordered_json run = {
      {"command", mode == train::TrainMode::teacher ? "train-teacher" : "train-student"},
      {"erde_version", std::string(erde::version())},
      {"seed", config.train.seed},
      {"mode", std::string(train::to_string(mode))},
      {"loss_formula", log.loss_formula},
      {"config", "config.ini"},
      {"inputs", {{"data", prepared.provenance}, {"teacher", args.teacher && teacher ? data::file_provenance(*args.teacher) : ""}}},
      {"arch", arch_json(net.arch())},
      {"macs_per_exit", cumulative_macs(net.arch())},
      {"epochs_run", log.epochs.size()},
      {"best_epoch", log.best_epoch},
      {"best_val_acc", log.best_val_acc},
      {"stopped_early", log.stopped_early},
      {"test_acc_per_exit", test_acc},
      {"outputs", {"weights.bin", "train_log.ndjson", "config.ini", "run.json"}},
  };
  write_text(args.out / "run.json", run.dump(2) + "\n");
  out << "loss: " << log.loss_formula << "\n";
  out << "test accuracy per exit:";
  for (double a : test_acc) out << " " << fmt("%.4f", a);
  out << "\nwrote " << (args.out / "weights.bin").string() << "\n";
  return 0;
}

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream&) {
  const ModelFile model = load_model(args.model);
  std::optional<ExperimentConfig> config;
  if (args.config) config = load_config(*args.config);
  const double lo = args.theta_min.value_or(config ? config->sweep.theta_min : 0.0);
  const double hi = args.theta_max.value_or(config && config->sweep.theta_max >= 0.0
                                                ? config->sweep.theta_max
                                                : std::log(static_cast<double>(model.net.class_count())));
  const std::size_t steps = args.steps.value_or(config ? config->sweep.steps : 100);
  if (lo < 0.0) throw ConfigError("--theta-min must be non-negative");
  if (steps < 1) throw ConfigError("--steps must be at least 1");
  if (steps > 1 && hi < lo) throw ConfigError("--theta-max must not be below --theta-min");
  const std::vector<double> thetas = exits::theta_grid(lo, steps == 1 ? lo : hi, steps);
  prepare_output_dir(args.out, args.force);

  std::string provenance;
  const data::Dataset ds = evaluation_data(args.data, args.labels, args.config, args.model, model, provenance);
  const std::size_t threads = exits::threads_from_env();
  const auto traces = exits::trace_dataset(model.net, ds, {threads, 64});
  exits::SweepReport report = exits::sweep(traces, thetas, threads);
  report.model_provenance = data::file_provenance(args.model);
  report.dataset_provenance = provenance;

  write_text(args.out / "sweep.csv", exits::to_csv(report));
  write_text(args.out / "sweep.json", exits::to_json(report));
  ordered_json run = {{"command", "sweep"},
                      {"erde_version", std::string(erde::version())},
                      {"inputs", {{"model", report.model_provenance}, {"data", provenance}}},
                      {"theta_min", lo},
                      {"theta_max", thetas.back()},
                      {"steps", steps},
                      {"threads", threads},
                      {"outputs", {"sweep.csv", "sweep.json", "run.json"}}};
  if (args.reference) {
    const ModelFile ref = load_model(*args.reference);
    const double ref_macs = static_cast<double>(exits::mac_count(ref.net.arch()).total());
    std::string table = "# relative MACs against " + args.reference->string() + " (" + fmt("%.1f", ref_macs) + " MACs)\n";
    char header[128];
    std::snprintf(header, sizeof header, "%-24s %8s %14s %8s\n", "approach", "accuracy", "avg_macs", "rel");
    table += header;
    for (const auto& row : report.rows) {
      table += exits::table_row(args.label + " theta=" + fmt("%.4g", row.theta), row.accuracy(), row.avg_macs(), ref_macs) +
               "\n";
    }
    write_text(args.out / "table.txt", table);
    out << table;
    run["reference"] = data::file_provenance(*args.reference);
    run["outputs"].push_back("table.txt");
  }
  write_text(args.out / "run.json", run.dump(2) + "\n");
  out << "swept " << report.rows.size() << " thresholds over " << ds.size() << " examples; wrote "
      << (args.out / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_macs(const MacsArgs& args, std::ostream& out, std::ostream&) {
  model::ArchConfig arch;
  if (args.model) {
    arch = load_model(*args.model).net.arch();
  } else if (args.config) {
    const ExperimentConfig c = load_config(*args.config);
    std::size_t ch = 1, h = c.data.height, w = c.data.width;
    if (c.data.source == "cifar") {
      ch = 3;
      h = w = 32;
    } else if (c.data.source == "idx") {
      const data::Dataset probe = data::load_idx(c.data.images, c.data.labels, c.data.class_count);
      h = probe.height();
      w = probe.width();
    }
    if (args.which != "model" && args.which != "teacher") throw ConfigError("--which must be model or teacher");
    arch = build_arch(args.which == "teacher" ? static_cast<const ArchSection&>(c.teacher) : c.model, ch, h, w,
                      c.data.class_count);
  } else {
    throw ConfigError("macs needs --config or --model");
  }
  const exits::MacTable table = exits::mac_count(arch);
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-4s %-22s %12s\n", "layer", "kind", "shape", "macs");
  out << line;
  for (const auto& l : table.layers) {
    std::snprintf(line, sizeof line, "%-14s %-4s %-22s %12llu\n", l.name.c_str(), l.kind.c_str(), l.shape.c_str(),
                  static_cast<unsigned long long>(l.macs));
    out << line;
  }
  for (std::size_t i = 0; i < table.exit_count(); ++i) {
    std::snprintf(line, sizeof line, "exit %zu: block %llu head %llu cumulative %llu\n", i + 1,
                  static_cast<unsigned long long>(table.block[i]), static_cast<unsigned long long>(table.head[i]),
                  static_cast<unsigned long long>(table.cumulative[i]));
    out << line;
  }
  out << "total " << table.total() << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream&) {
  if (args.theta < 0.0) throw ConfigError("--theta must be non-negative");
  const ModelFile model = load_model(args.model);
  std::string provenance;
  const data::Dataset ds = evaluation_data(args.data, args.labels, args.config, args.model, model, provenance);
  const std::size_t threads = exits::threads_from_env();
  const auto traces = exits::trace_dataset(model.net, ds, {threads, 64});
  const std::vector<double> thetas{args.theta};
  const exits::SweepReport report = exits::sweep(traces, thetas, threads);
  out << "data " << provenance << "\n" << row_summary(report.rows[0]);
  out << "full_network_macs " << report.full_network_macs << "\n";
  if (args.latency_repetitions > 0) {
    const exits::LatencyReport lat = exits::latency_probe(model.net, ds, args.theta, args.latency_repetitions);
    out << "latency_mean_seconds " << fmt("%.6e", lat.mean_seconds) << "\nlatency_stddev_seconds "
        << fmt("%.6e", lat.stddev_seconds) << "\nlatency_repetitions " << lat.repetitions << "\nhost " << lat.host
        << "\n";
  }
  return 0;
}

}  // namespace erde::cli
