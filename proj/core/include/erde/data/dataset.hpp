// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "erde/autodiff/tensor.hpp"
#include "erde/error.hpp"

namespace erde::data {

class DataFormatError : public Error {
 public:
  enum class Kind { io, bad_size, bad_magic, label_out_of_range, count_mismatch, truncated };

  DataFormatError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct DatasetMeta {
  std::size_t class_count = 0;
  // Filled by standardize(); empty while pixels are still in [0, 1].
  std::vector<double> channel_mean;
  std::vector<double> channel_std;
  std::string provenance;
};

/// N x C x H x W images with integer labels. Pixels are stored in single
/// precision; batches are materialized in double.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> pixels,
          std::vector<int> labels, DatasetMeta meta);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t image_size() const { return channels_ * height_ * width_; }
  std::size_t class_count() const { return meta_.class_count; }

  std::span<const float> image(std::size_t index) const;
  std::span<float> mutable_image(std::size_t index);
  const std::vector<float>& pixels() const { return pixels_; }
  const std::vector<int>& labels() const { return labels_; }
  int label(std::size_t index) const { return labels_[index]; }

  const DatasetMeta& meta() const { return meta_; }
  DatasetMeta& mutable_meta() { return meta_; }

  /// Images at `indices` as a |indices| x C x H x W tensor.
  ad::Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;

  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  std::size_t channels_ = 0, height_ = 0, width_ = 0;
  std::vector<float> pixels_;
  std::vector<int> labels_;
  DatasetMeta meta_;
};

/// CIFAR-10 binary batches: records of 1 label byte + 3 x 32 x 32 pixel bytes.
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths, std::size_t class_count = 10);

/// IDX image file (magic 0x803, u8, N x H x W) plus label file (magic 0x801).
Dataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                 std::size_t class_count = 10);

struct SynthSpec {
  std::size_t class_count = 4;
  std::size_t count = 2800;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;
};

/// Noise-free class patterns: an oriented sinusoidal grating per class with a
/// class-specific orientation, frequency and phase, in [0, 1].
std::vector<std::vector<float>> synth_templates(std::size_t class_count, std::size_t height, std::size_t width);

/// Grayscale images template(label) + N(0, sigma^2), labels balanced to
/// within one and shuffled. Throws ConfigError for K outside [2, 8] or H, W < 8.
Dataset synth_generate(const SynthSpec& spec);

/// Label of the template nearest in squared Euclidean distance to each image.
std::vector<int> nearest_template_predict(const Dataset& dataset, const std::vector<std::vector<float>>& templates);

struct SplitSpec {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::uint64_t seed = 0;
};

struct Splits {
  Dataset train, val, test;
};

/// Disjoint random train / val / test subsets of the requested sizes.
Splits split(const Dataset& dataset, const SplitSpec& spec);

/// Per-channel mean and (population) standard deviation.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};
ChannelStats channel_stats(const Dataset& dataset);

/// (x - mean) / std per channel; records the statistics in the meta.
void standardize(Dataset& dataset, const ChannelStats& stats);

/// Fits statistics on the training split and applies them to all three.
ChannelStats standardize(Splits& splits);

/// "path (bytes=..., fnv1a64=...)" descriptor of an input file.
std::string file_provenance(const std::filesystem::path& path);

}  // namespace erde::data
