// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/data/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "erde/rng.hpp"

namespace erde::data {

namespace {

using Kind = DataFormatError::Kind;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError(Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string describe(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return path.string() + " (bytes=" + std::to_string(bytes.size()) + ", fnv1a64=" + hash + ")";
}

void check_label(int label, std::size_t k, const std::string& where) {
  if (label < 0 || static_cast<std::size_t>(label) >= k) {
    throw DataFormatError(Kind::label_out_of_range,
                          where + ": label " + std::to_string(label) + " >= class count " + std::to_string(k));
  }
}

}  // namespace

Dataset::Dataset(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> pixels,
                 std::vector<int> labels, DatasetMeta meta)
    : channels_(channels), height_(height), width_(width), pixels_(std::move(pixels)), labels_(std::move(labels)),
      meta_(std::move(meta)) {
  if (channels_ == 0 || height_ == 0 || width_ == 0) throw ShapeError("dataset: zero image dimension");
  if (pixels_.size() != labels_.size() * image_size()) {
    throw ShapeError("dataset: " + std::to_string(pixels_.size()) + " pixels for " + std::to_string(labels_.size()) +
                     " images of " + std::to_string(image_size()));
  }
  for (int y : labels_) check_label(y, meta_.class_count, "dataset");
}

std::span<const float> Dataset::image(std::size_t index) const {
  return std::span<const float>(pixels_).subspan(index * image_size(), image_size());
}

std::span<float> Dataset::mutable_image(std::size_t index) {
  return std::span<float>(pixels_).subspan(index * image_size(), image_size());
}

ad::Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ShapeError("dataset: empty batch");
  const std::size_t per = image_size();
  std::vector<double> values(indices.size() * per);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto img = image(indices[b]);
    std::copy(img.begin(), img.end(), values.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return ad::Tensor({indices.size(), channels_, height_, width_}, std::move(values));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) out[b] = labels_[indices[b]];
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<float> pixels;
  pixels.reserve(indices.size() * image_size());
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ShapeError("dataset: subset index " + std::to_string(i) + " out of range");
    const auto img = image(i);
    pixels.insert(pixels.end(), img.begin(), img.end());
    labels.push_back(labels_[i]);
  }
  Dataset out;
  out.channels_ = channels_;
  out.height_ = height_;
  out.width_ = width_;
  out.pixels_ = std::move(pixels);
  out.labels_ = std::move(labels);
  out.meta_ = meta_;
  return out;
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths, std::size_t class_count) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  constexpr std::size_t kRecord = 1 + kPixels;
  if (paths.empty()) throw DataFormatError(Kind::io, "cifar: no input files");
  std::vector<float> pixels;
  std::vector<int> labels;
  DatasetMeta meta;
  meta.class_count = class_count;
  meta.provenance = "cifar-binary:";
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      throw DataFormatError(Kind::bad_size, "cifar: " + path.string() + " has " + std::to_string(bytes.size()) +
                                                " bytes, not a whole number of 3073-byte records");
    }
    const std::size_t n = bytes.size() / kRecord;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t off = r * kRecord;
      check_label(bytes[off], class_count, "cifar: " + path.string() + " record " + std::to_string(r));
      labels.push_back(bytes[off]);
      for (std::size_t p = 0; p < kPixels; ++p) pixels.push_back(static_cast<float>(bytes[off + 1 + p] / 255.0));
    }
    if (meta.provenance.back() != ':') meta.provenance += "; ";
    meta.provenance += describe(path, bytes);
  }
  return Dataset(3, 32, 32, std::move(pixels), std::move(labels), std::move(meta));
}

Dataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                 std::size_t class_count) {
  const auto img = read_file(image_path);
  const auto lab = read_file(label_path);
  if (img.size() < 16) throw DataFormatError(Kind::truncated, "idx: " + image_path.string() + " shorter than header");
  if (lab.size() < 8) throw DataFormatError(Kind::truncated, "idx: " + label_path.string() + " shorter than header");
  if (be32(img, 0) != 0x00000803) {
    throw DataFormatError(Kind::bad_magic, "idx: " + image_path.string() + " is not a u8 rank-3 image file");
  }
  if (be32(lab, 0) != 0x00000801) {
    throw DataFormatError(Kind::bad_magic, "idx: " + label_path.string() + " is not a u8 rank-1 label file");
  }
  const std::size_t n = be32(img, 4), h = be32(img, 8), w = be32(img, 12);
  const std::size_t n_labels = be32(lab, 4);
  if (n != n_labels) {
    throw DataFormatError(Kind::count_mismatch, "idx: " + std::to_string(n) + " images but " +
                                                    std::to_string(n_labels) + " labels");
  }
  if (h == 0 || w == 0) throw DataFormatError(Kind::bad_size, "idx: zero image dimension");
  if (img.size() != 16 + n * h * w) {
    throw DataFormatError(img.size() < 16 + n * h * w ? Kind::truncated : Kind::bad_size,
                          "idx: " + image_path.string() + " payload is " + std::to_string(img.size() - 16) +
                              " bytes, expected " + std::to_string(n * h * w));
  }
  if (lab.size() != 8 + n) {
    throw DataFormatError(lab.size() < 8 + n ? Kind::truncated : Kind::bad_size,
                          "idx: " + label_path.string() + " payload is " + std::to_string(lab.size() - 8) +
                              " bytes, expected " + std::to_string(n));
  }
  std::vector<float> pixels(n * h * w);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<float>(img[16 + i] / 255.0);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    check_label(lab[8 + i], class_count, "idx: " + label_path.string() + " entry " + std::to_string(i));
    labels[i] = lab[8 + i];
  }
  DatasetMeta meta;
  meta.class_count = class_count;
  meta.provenance = "idx:" + describe(image_path, img) + "; " + describe(label_path, lab);
  return Dataset(1, h, w, std::move(pixels), std::move(labels), std::move(meta));
}

std::vector<std::vector<float>> synth_templates(std::size_t class_count, std::size_t height, std::size_t width) {
  std::vector<std::vector<float>> out(class_count, std::vector<float>(height * width));
  for (std::size_t k = 0; k < class_count; ++k) {
    const double angle = std::numbers::pi * static_cast<double>(k) / static_cast<double>(class_count);
    const double cycles = 2.0 + 0.75 * static_cast<double>(k % 3);
    const double phase = 0.6 * static_cast<double>(k);
    const double fx = std::cos(angle) / static_cast<double>(width);
    const double fy = std::sin(angle) / static_cast<double>(height);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double t = 2.0 * std::numbers::pi * cycles * (fx * static_cast<double>(x) + fy * static_cast<double>(y));
        out[k][y * width + x] = static_cast<float>(0.5 + 0.5 * std::sin(t + phase));
      }
    }
  }
  return out;
}

Dataset synth_generate(const SynthSpec& spec) {
  if (spec.class_count < 2 || spec.class_count > 8) throw ConfigError("synth: class count must be in [2, 8]");
  if (spec.height < 8 || spec.width < 8) throw ConfigError("synth: images must be at least 8 x 8");
  if (spec.count == 0) throw ConfigError("synth: count must be positive");
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("synth: noise sigma must be nonnegative");

  const auto templates = synth_templates(spec.class_count, spec.height, spec.width);
  std::vector<int> labels(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) labels[i] = static_cast<int>(i % spec.class_count);
  Rng order(derive_seed(spec.seed, {0x5E7}));
  order.shuffle(std::span<int>(labels));

  Rng noise(derive_seed(spec.seed, {0x401CE}));
  const std::size_t per = spec.height * spec.width;
  std::vector<float> pixels(spec.count * per);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const auto& t = templates[static_cast<std::size_t>(labels[i])];
    for (std::size_t p = 0; p < per; ++p) {
      pixels[i * per + p] = static_cast<float>(t[p] + spec.noise_sigma * noise.normal());
    }
  }
  char sigma[32];
  std::snprintf(sigma, sizeof sigma, "%.17g", spec.noise_sigma);
  DatasetMeta meta;
  meta.class_count = spec.class_count;
  meta.provenance = "synth:K=" + std::to_string(spec.class_count) + ",N=" + std::to_string(spec.count) +
                    ",H=" + std::to_string(spec.height) + ",W=" + std::to_string(spec.width) + ",sigma=" + sigma +
                    ",seed=" + std::to_string(spec.seed);
  return Dataset(1, spec.height, spec.width, std::move(pixels), std::move(labels), std::move(meta));
}

std::vector<int> nearest_template_predict(const Dataset& dataset, const std::vector<std::vector<float>>& templates) {
  for (const auto& t : templates) {
    if (t.size() != dataset.image_size()) throw ShapeError("nearest_template_predict: template size mismatch");
  }
  std::vector<int> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto img = dataset.image(i);
    double best = INFINITY;
    for (std::size_t k = 0; k < templates.size(); ++k) {
      double d = 0.0;
      for (std::size_t p = 0; p < img.size(); ++p) {
        const double diff = static_cast<double>(img[p]) - templates[k][p];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        out[i] = static_cast<int>(k);
      }
    }
  }
  return out;
}

Splits split(const Dataset& dataset, const SplitSpec& spec) {
  const std::size_t need = spec.train + spec.val + spec.test;
  if (need > dataset.size()) {
    throw ConfigError("split: requested " + std::to_string(need) + " examples from a dataset of " +
                      std::to_string(dataset.size()));
  }
  if (spec.train == 0) throw ConfigError("split: training split must be nonempty");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(spec.seed, {0x5B117}));
  rng.shuffle(std::span<std::size_t>(order));
  const std::span<const std::size_t> all(order);
  Splits out;
  out.train = dataset.subset(all.subspan(0, spec.train));
  out.val = dataset.subset(all.subspan(spec.train, spec.val));
  out.test = dataset.subset(all.subspan(spec.train + spec.val, spec.test));
  return out;
}

ChannelStats channel_stats(const Dataset& dataset) {
  if (dataset.empty()) throw ConfigError("channel_stats: empty dataset");
  const std::size_t c = dataset.channels();
  const std::size_t plane = dataset.height() * dataset.width();
  ChannelStats stats{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const double count = static_cast<double>(dataset.size() * plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto img = dataset.image(i).subspan(ch * plane, plane);
      for (float v : img) s += v;
    }
    const double mean = s / count;
    double ss = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto img = dataset.image(i).subspan(ch * plane, plane);
      for (float v : img) ss += (v - mean) * (v - mean);
    }
    stats.mean[ch] = mean;
    stats.std[ch] = std::sqrt(ss / count);
  }
  return stats;
}

void standardize(Dataset& dataset, const ChannelStats& stats) {
  const std::size_t c = dataset.channels();
  if (stats.mean.size() != c || stats.std.size() != c) throw ShapeError("standardize: channel count mismatch");
  const std::size_t plane = dataset.height() * dataset.width();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto img = dataset.mutable_image(i);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double scale = stats.std[ch] > 0.0 ? 1.0 / stats.std[ch] : 1.0;
      for (std::size_t p = 0; p < plane; ++p) {
        float& v = img[ch * plane + p];
        v = static_cast<float>((v - stats.mean[ch]) * scale);
      }
    }
  }
  dataset.mutable_meta().channel_mean = stats.mean;
  dataset.mutable_meta().channel_std = stats.std;
}

ChannelStats standardize(Splits& splits) {
  const ChannelStats stats = channel_stats(splits.train);
  standardize(splits.train, stats);
  standardize(splits.val, stats);
  standardize(splits.test, stats);
  return stats;
}

std::string file_provenance(const std::filesystem::path& path) { return describe(path, read_file(path)); }

}  // namespace erde::data
