// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "erde/autodiff/ops.hpp"
#include "erde/error.hpp"
#include "erde/exits/engine.hpp"
#include "erde/rng.hpp"
#include "erde/train/adam.hpp"

namespace erde::train {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::teacher:
      return "teacher";
    case TrainMode::student_no_kd:
      return "none";
    case TrainMode::student_kd:
      return "kd";
    case TrainMode::student_erde:
      return "erde";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "teacher") return TrainMode::teacher;
  if (text == "none" || text == "no_kd" || text == "no-kd") return TrainMode::student_no_kd;
  if (text == "kd") return TrainMode::student_kd;
  if (text == "erde") return TrainMode::student_erde;
  throw ConfigError("unknown training mode '" + std::string(text) + "' (expected teacher, none, kd or erde)");
}

bool needs_teacher(TrainMode mode) { return mode == TrainMode::student_kd || mode == TrainMode::student_erde; }

std::string loss_formula(TrainMode mode, const losses::LossWeights& w) {
  char buf[256];
  switch (mode) {
    case TrainMode::teacher:
    case TrainMode::student_no_kd:
      return "ce_joint: sum_i CE_i";
    case TrainMode::student_kd:
      std::snprintf(buf, sizeof buf, "kd: sum_i (%g*KL_i(T=%g) + %g*CE_i%s)", w.omega_kl, w.temperature, w.omega_ce,
                    w.soften_ce ? "(T)" : "");
      return buf;
    case TrainMode::student_erde:
      std::snprintf(buf, sizeof buf,
                    "erde: sum_{i<n} [teacher_i correct] (%g*KL_i(T=%g) + %g*CE_i%s) + [teacher_i wrong] %g*sum p log p"
                    " + final-exit KD",
                    w.omega_kl, w.temperature, w.omega_ce, w.soften_ce ? "(T)" : "", w.omega_e);
      return buf;
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (!(augment.flip_probability >= 0.0 && augment.flip_probability <= 1.0) ||
      !(augment.probability >= 0.0 && augment.probability <= 1.0)) {
    throw ConfigError("train: augmentation probabilities must be in [0, 1]");
  }
  loss.validate();
}

std::string TrainLog::to_ndjson() const {
  std::string out;
  for (const EpochRecord& r : epochs) {
    nlohmann::ordered_json j = {{"epoch", r.epoch},
                                {"train_loss", r.train_loss},
                                {"val_acc_per_exit", r.val_acc_per_exit},
                                {"best_so_far", r.best_so_far},
                                {"loss_formula", loss_formula}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<double> exit_accuracies(const model::MultiExitNetwork& net, const data::Dataset& dataset,
                                    std::size_t batch_size) {
  std::vector<double> acc(net.exit_count(), 0.0);
  if (dataset.empty()) return acc;
  const auto traces = exits::trace_dataset(net, dataset, {1, batch_size});
  for (const auto& t : traces) {
    for (std::size_t e = 0; e < t.exit_count; ++e) {
      if (exits::argmax(t.exit_logits(e)) == t.label) acc[e] += 1.0;
    }
  }
  for (double& a : acc) a /= static_cast<double>(dataset.size());
  return acc;
}

namespace {

void copy_state(const model::MultiExitNetwork& from, model::MultiExitNetwork& to) {
  const auto src = from.parameters();
  const auto dst = to.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    ad::Tensor t = dst[i].tensor;
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), t.mutable_data().begin());
  }
  const auto src_buf = from.buffers();
  const auto dst_buf = to.buffers();
  for (std::size_t i = 0; i < src_buf.size(); ++i) *dst_buf[i].values = *src_buf[i].values;
}

// Teacher logits for every training example, computed once in eval mode.
class TeacherCache {
 public:
  TeacherCache(const model::MultiExitNetwork& teacher, const data::Dataset& set) : k_(teacher.class_count()) {
    const auto traces = exits::trace_dataset(teacher, set, {1, 256});
    logits_.resize(teacher.exit_count());
    for (std::size_t e = 0; e < teacher.exit_count(); ++e) {
      logits_[e].resize(set.size() * k_);
      for (std::size_t i = 0; i < set.size(); ++i) {
        const auto z = traces[i].exit_logits(e);
        std::copy(z.begin(), z.end(), logits_[e].begin() + static_cast<std::ptrdiff_t>(i * k_));
      }
    }
  }

  std::vector<ad::Tensor> batch(std::span<const std::size_t> idx) const {
    std::vector<ad::Tensor> out;
    for (const auto& exit : logits_) {
      std::vector<double> v(idx.size() * k_);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        std::copy_n(exit.begin() + static_cast<std::ptrdiff_t>(idx[b] * k_), k_,
                    v.begin() + static_cast<std::ptrdiff_t>(b * k_));
      }
      out.push_back(ad::Tensor::matrix(idx.size(), k_, std::move(v)));
    }
    return out;
  }

 private:
  std::size_t k_;
  std::vector<std::vector<double>> logits_;
};

}  // namespace

TrainLog train(model::MultiExitNetwork& net, const model::MultiExitNetwork* teacher, const data::Dataset& train_set,
               const data::Dataset& val_set, const TrainConfig& config,
               const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");
  if (train_set.class_count() > net.class_count()) {
    throw ConfigError("train: dataset has " + std::to_string(train_set.class_count()) +
                      " classes but the network predicts " + std::to_string(net.class_count()));
  }
  const bool distill = needs_teacher(config.mode);
  if (distill) {
    if (teacher == nullptr) throw ConfigError("train: mode " + std::string(to_string(config.mode)) + " needs a teacher");
    if (teacher->class_count() != net.class_count()) throw ConfigError("train: teacher and student class counts differ");
    if (teacher->arch().in_channels != net.arch().in_channels || teacher->arch().height != net.arch().height ||
        teacher->arch().width != net.arch().width) {
      throw ConfigError("train: teacher and student input shapes differ");
    }
    losses::resolve_alignment(config.alignment, net.exit_count(), teacher->exit_count());
  }

  TrainLog log;
  log.loss_formula = loss_formula(config.mode, config.loss);
  Adam adam(net.parameters(), {config.learning_rate});

  std::optional<TeacherCache> cache;
  if (distill && !config.augment.any()) cache.emplace(*teacher, train_set);

  model::MultiExitNetwork best;
  bool have_best = false;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(config.seed, {epoch, 0x5A0FF1E}));
    shuffler.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(config.batch_size, order.size() - start));
      ad::Tensor x = train_set.batch(idx);
      if (config.augment.any()) x = augment(x, derive_seed(config.seed, {epoch, batch_index, 0xA06}), config.augment);
      const std::vector<int> labels = train_set.batch_labels(idx);

      std::vector<ad::Tensor> teacher_logits;
      if (distill) {
        if (cache) {
          teacher_logits = cache->batch(idx);
        } else {
          ad::Tape::Pause frozen;
          teacher_logits = teacher->forward_all_exits(x, model::Mode::eval);
        }
      }

      for (const auto& p : adam.params()) {
        ad::Tensor t = p.tensor;
        t.clear_grad();
      }
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      const auto logits =
          net.forward_all_exits(x, model::Mode::train, derive_seed(config.seed, {epoch, batch_index, 0xD20}));
      ad::Tensor loss;
      switch (config.mode) {
        case TrainMode::teacher:
        case TrainMode::student_no_kd:
          loss = losses::ce_joint(logits, labels);
          break;
        case TrainMode::student_kd:
          loss = losses::kd_baseline(logits, teacher_logits, labels, config.loss, config.alignment).total;
          break;
        case TrainMode::student_erde:
          loss = losses::erde_total(logits, teacher_logits, labels, config.loss, config.alignment).total;
          break;
      }
      if (!std::isfinite(loss.item())) {
        throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(batch_index));
      }
      tape.backward(loss);
      adam.step();
      loss_sum += loss.item() * static_cast<double>(idx.size());
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      record.val_acc_per_exit = exit_accuracies(net, val_set);
      const double final_acc = record.val_acc_per_exit.back();
      if (!have_best || final_acc > log.best_val_acc) {
        log.best_val_acc = final_acc;
        log.best_epoch = epoch;
        best = net.clone();
        have_best = true;
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      log.best_epoch = epoch;
    }
    record.best_so_far = log.best_val_acc;
    log.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (have_best && config.early_stop_patience > 0 && since_best >= config.early_stop_patience) {
      log.stopped_early = epoch < config.epochs;
      break;
    }
  }
  if (have_best) copy_state(best, net);
  for (const auto& p : adam.params()) {
    ad::Tensor t = p.tensor;
    t.clear_grad();
  }
  return log;
}

}  // namespace erde::train
