// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "erde/autodiff/tensor.hpp"

namespace erde::model {

using ad::Tensor;

enum class BlockKind : std::uint8_t { plain_conv = 0, residual = 1 };

std::string_view to_string(BlockKind kind);
BlockKind parse_block_kind(std::string_view text);

/// One backbone stage. The first 3x3 convolution carries the stride.
struct BlockSpec {
  BlockKind kind = BlockKind::plain_conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  std::size_t conv_count = 1;

  bool operator==(const BlockSpec&) const = default;
};

/// Exit head: BN -> ReLU -> 2x2 average pool (stride 2) -> dropout -> FC.
struct ExitHeadSpec {
  double dropout_p = 0.5;
  std::size_t class_count = 0;

  bool operator==(const ExitHeadSpec&) const = default;
};

struct ArchConfig {
  std::size_t in_channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t class_count = 4;
  std::vector<BlockSpec> blocks;
  double dropout_p = 0.5;
  std::uint64_t seed = 0;

  ExitHeadSpec head() const { return {dropout_p, class_count}; }
  std::size_t exit_count() const { return blocks.size(); }

  /// Throws ConfigError on an empty block list or broken channel chaining.
  void validate() const;

  bool operator==(const ArchConfig&) const = default;
};

/// Desk-scale presets. "tiny6", "tiny8" and "tiny10" have 2, 3 and 4
/// two-convolution blocks with widths w, 2w, 4w, 8w; every block after the
/// first halves the resolution.
ArchConfig preset(std::string_view name, std::size_t base_width, std::size_t in_channels, std::size_t height,
                  std::size_t width, std::size_t class_count, BlockKind kind = BlockKind::plain_conv);

/// Spatial size after each block and the flattened FC input of each head.
struct StageGeometry {
  std::size_t channels, height, width;
  std::size_t head_features;
};
std::vector<StageGeometry> stage_geometry(const ArchConfig& arch);

enum class Mode { train, eval };

struct Conv2d {
  Tensor weight;  // C_out x C_in x k x k
  std::size_t stride = 1;
  std::size_t padding = 1;
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct Linear {
  Tensor weight;  // out x in
  Tensor bias;
};

struct Block {
  BlockSpec spec;
  std::vector<Conv2d> convs;
  std::vector<BatchNorm> norms;
  bool has_projection = false;
  Conv2d projection;
  BatchNorm projection_norm;
};

struct ExitHead {
  BatchNorm norm;
  double dropout_p = 0.5;
  Linear fc;
};

/// A tensor owned by the network, addressed by a stable dotted name.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Named non-differentiable state (BN running statistics).
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

/// Backbone blocks with one exit head per block. Exit i depends only on
/// blocks 1..i and head i; the last exit is the network's ordinary output.
class MultiExitNetwork {
 public:
  MultiExitNetwork() = default;
  /// Builds and initializes from `arch.seed` (He fan-in conv/FC weights, zero
  /// biases, gamma = 1, beta = 0).
  explicit MultiExitNetwork(ArchConfig arch);

  const ArchConfig& arch() const { return arch_; }
  std::size_t exit_count() const { return blocks_.size(); }
  std::size_t class_count() const { return arch_.class_count; }

  /// Input to block `index` is the previous block's output (or the image).
  /// Head dropout masks in train mode derive from `seed` and the head index.
  Tensor forward_block(std::size_t index, const Tensor& input, Mode mode) const;
  Tensor forward_head(std::size_t index, const Tensor& features, Mode mode, std::uint64_t seed = 0) const;

  /// Logits of every exit, in order. Train mode updates BN running statistics
  /// and applies dropout seeded by `seed`.
  std::vector<Tensor> forward_all_exits(const Tensor& batch, Mode mode, std::uint64_t seed = 0) const;

  /// Trainable tensors in a fixed order.
  std::vector<NamedTensor> parameters() const;
  std::vector<NamedBuffer> buffers() const;

  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<ExitHead>& heads() const { return heads_; }
  std::vector<Block>& mutable_blocks() { return blocks_; }
  std::vector<ExitHead>& mutable_heads() { return heads_; }

  /// Deep copy, including BN statistics.
  MultiExitNetwork clone() const;

  void check_input(const Tensor& batch) const;

 private:
  ArchConfig arch_;
  // BN running statistics are updated in train-mode forwards, which are
  // logically const for the parameter set but mutate this state.
  mutable std::vector<Block> blocks_;
  mutable std::vector<ExitHead> heads_;
};

}  // namespace erde::model
