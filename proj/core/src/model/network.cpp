// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/model/network.hpp"

#include <cmath>

#include "erde/autodiff/ops.hpp"
#include "erde/error.hpp"
#include "erde/rng.hpp"

namespace erde::model {

std::string_view to_string(BlockKind kind) { return kind == BlockKind::residual ? "residual" : "conv"; }

BlockKind parse_block_kind(std::string_view text) {
  if (text == "conv" || text == "plain" || text == "plain-conv") return BlockKind::plain_conv;
  if (text == "residual" || text == "res") return BlockKind::residual;
  throw ConfigError("unknown block kind '" + std::string(text) + "' (expected conv or residual)");
}

void ArchConfig::validate() const {
  if (blocks.empty()) throw ConfigError("architecture: at least one block is required");
  if (class_count < 2) throw ConfigError("architecture: class count must be at least 2");
  if (in_channels == 0 || height == 0 || width == 0) throw ConfigError("architecture: input shape must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("architecture: dropout must be in [0, 1)");
  std::size_t channels = in_channels;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const BlockSpec& b = blocks[i];
    if (b.in_channels != channels) {
      throw ConfigError("architecture: block " + std::to_string(i + 1) + " expects " + std::to_string(b.in_channels) +
                        " input channels but receives " + std::to_string(channels));
    }
    if (b.out_channels == 0 || b.stride == 0 || b.conv_count == 0) {
      throw ConfigError("architecture: block " + std::to_string(i + 1) + " has a zero channel/stride/conv count");
    }
    channels = b.out_channels;
  }
  const auto geometry = stage_geometry(*this);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (geometry[i].height < 2 || geometry[i].width < 2) {
      throw ConfigError("architecture: block " + std::to_string(i + 1) +
                        " output is smaller than the 2x2 exit-head pool");
    }
  }
}

std::vector<StageGeometry> stage_geometry(const ArchConfig& arch) {
  std::vector<StageGeometry> out;
  std::size_t h = arch.height, w = arch.width;
  for (const BlockSpec& b : arch.blocks) {
    h = (h - 1) / b.stride + 1;
    w = (w - 1) / b.stride + 1;
    out.push_back({b.out_channels, h, w, b.out_channels * (h / 2) * (w / 2)});
  }
  return out;
}

ArchConfig preset(std::string_view name, std::size_t base_width, std::size_t in_channels, std::size_t height,
                  std::size_t width, std::size_t class_count, BlockKind kind) {
  std::size_t block_count = 0;
  if (name == "tiny6") {
    block_count = 2;
  } else if (name == "tiny8") {
    block_count = 3;
  } else if (name == "tiny10") {
    block_count = 4;
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "' (expected tiny6, tiny8 or tiny10)");
  }
  if (base_width == 0) throw ConfigError("preset width must be positive");
  ArchConfig arch;
  arch.in_channels = in_channels;
  arch.height = height;
  arch.width = width;
  arch.class_count = class_count;
  std::size_t channels = in_channels;
  for (std::size_t i = 0; i < block_count; ++i) {
    const std::size_t out = base_width << i;
    arch.blocks.push_back({kind, channels, out, i == 0 ? 1u : 2u, 2});
    channels = out;
  }
  return arch;
}

namespace {

Tensor he_normal(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> values(ad::element_count(shape));
  for (double& v : values) v = std_dev * rng.normal();
  return Tensor(std::move(shape), std::move(values), true);
}

Conv2d make_conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng) {
  Conv2d conv;
  conv.weight = he_normal({out, in, kernel, kernel}, in * kernel * kernel, rng);
  conv.stride = stride;
  conv.padding = kernel / 2;
  return conv;
}

BatchNorm make_norm(std::size_t channels) {
  BatchNorm bn;
  bn.gamma = Tensor::filled({channels}, 1.0, true);
  bn.beta = Tensor::zeros({channels}, true);
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  return bn;
}

Tensor apply_norm(BatchNorm& bn, const Tensor& x, Mode mode) {
  return ad::batch_norm(x, bn.gamma, bn.beta, bn.running_mean, bn.running_var,
                        {bn.momentum, bn.eps, mode == Mode::train});
}

Tensor apply_conv(const Conv2d& conv, const Tensor& x) {
  return ad::conv2d(x, conv.weight, Tensor(), {conv.stride, conv.padding});
}

}  // namespace

MultiExitNetwork::MultiExitNetwork(ArchConfig arch) : arch_(std::move(arch)) {
  arch_.validate();
  Rng rng(derive_seed(arch_.seed, {0x1A17}));
  const auto geometry = stage_geometry(arch_);
  for (std::size_t i = 0; i < arch_.blocks.size(); ++i) {
    const BlockSpec& spec = arch_.blocks[i];
    Block block;
    block.spec = spec;
    std::size_t channels = spec.in_channels;
    for (std::size_t j = 0; j < spec.conv_count; ++j) {
      block.convs.push_back(make_conv(channels, spec.out_channels, 3, j == 0 ? spec.stride : 1, rng));
      block.norms.push_back(make_norm(spec.out_channels));
      channels = spec.out_channels;
    }
    if (spec.kind == BlockKind::residual && (spec.in_channels != spec.out_channels || spec.stride != 1)) {
      block.has_projection = true;
      block.projection = make_conv(spec.in_channels, spec.out_channels, 1, spec.stride, rng);
      block.projection_norm = make_norm(spec.out_channels);
    }
    blocks_.push_back(std::move(block));

    ExitHead head;
    head.norm = make_norm(spec.out_channels);
    head.dropout_p = arch_.dropout_p;
    const std::size_t features = geometry[i].head_features;
    head.fc.weight = he_normal({arch_.class_count, features}, features, rng);
    head.fc.bias = Tensor::zeros({arch_.class_count}, true);
    heads_.push_back(std::move(head));
  }
}

void MultiExitNetwork::check_input(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != arch_.in_channels || batch.dim(2) != arch_.height ||
      batch.dim(3) != arch_.width) {
    throw ShapeError("network: expected input N x " + std::to_string(arch_.in_channels) + " x " +
                     std::to_string(arch_.height) + " x " + std::to_string(arch_.width) + ", got " +
                     ad::to_string(batch.shape()));
  }
}

Tensor MultiExitNetwork::forward_block(std::size_t index, const Tensor& input, Mode mode) const {
  Block& block = blocks_.at(index);
  Tensor h = input;
  const std::size_t last = block.convs.size() - 1;
  for (std::size_t j = 0; j <= last; ++j) {
    h = apply_norm(block.norms[j], apply_conv(block.convs[j], h), mode);
    if (block.spec.kind == BlockKind::residual && j == last) break;
    h = ad::relu(h);
  }
  if (block.spec.kind == BlockKind::residual) {
    const Tensor skip =
        block.has_projection ? apply_norm(block.projection_norm, apply_conv(block.projection, input), mode) : input;
    h = ad::relu(ad::add(h, skip));
  }
  return h;
}

Tensor MultiExitNetwork::forward_head(std::size_t index, const Tensor& features, Mode mode,
                                      std::uint64_t seed) const {
  ExitHead& head = heads_.at(index);
  Tensor h = ad::relu(apply_norm(head.norm, features, mode));
  h = ad::avg_pool2x2(h);
  h = ad::dropout(h, {head.dropout_p, mode == Mode::train, derive_seed(seed, {index})});
  return ad::linear(ad::flatten(h), head.fc.weight, head.fc.bias);
}

std::vector<Tensor> MultiExitNetwork::forward_all_exits(const Tensor& batch, Mode mode, std::uint64_t seed) const {
  check_input(batch);
  std::vector<Tensor> logits;
  logits.reserve(blocks_.size());
  Tensor h = batch;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = forward_block(i, h, mode);
    logits.push_back(forward_head(i, h, mode, seed));
  }
  return logits;
}

std::vector<NamedTensor> MultiExitNetwork::parameters() const {
  std::vector<NamedTensor> out;
  auto add_norm = [&](const std::string& prefix, const BatchNorm& bn) {
    out.push_back({prefix + ".gamma", bn.gamma});
    out.push_back({prefix + ".beta", bn.beta});
  };
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    const Block& b = blocks_[i];
    for (std::size_t j = 0; j < b.convs.size(); ++j) {
      out.push_back({prefix + ".conv" + std::to_string(j) + ".weight", b.convs[j].weight});
      add_norm(prefix + ".bn" + std::to_string(j), b.norms[j]);
    }
    if (b.has_projection) {
      out.push_back({prefix + ".proj.weight", b.projection.weight});
      add_norm(prefix + ".proj_bn", b.projection_norm);
    }
  }
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const std::string prefix = "head" + std::to_string(i);
    add_norm(prefix + ".bn", heads_[i].norm);
    out.push_back({prefix + ".fc.weight", heads_[i].fc.weight});
    out.push_back({prefix + ".fc.bias", heads_[i].fc.bias});
  }
  return out;
}

std::vector<NamedBuffer> MultiExitNetwork::buffers() const {
  std::vector<NamedBuffer> out;
  auto add_norm = [&](const std::string& prefix, BatchNorm& bn) {
    out.push_back({prefix + ".running_mean", &bn.running_mean});
    out.push_back({prefix + ".running_var", &bn.running_var});
  };
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    Block& b = blocks_[i];
    for (std::size_t j = 0; j < b.norms.size(); ++j) add_norm(prefix + ".bn" + std::to_string(j), b.norms[j]);
    if (b.has_projection) add_norm(prefix + ".proj_bn", b.projection_norm);
  }
  for (std::size_t i = 0; i < heads_.size(); ++i) add_norm("head" + std::to_string(i) + ".bn", heads_[i].norm);
  return out;
}

MultiExitNetwork MultiExitNetwork::clone() const {
  MultiExitNetwork copy;
  copy.arch_ = arch_;
  copy.blocks_ = blocks_;
  copy.heads_ = heads_;
  auto deep = [](Tensor& t) { t = t.clone(); };
  for (Block& b : copy.blocks_) {
    for (Conv2d& c : b.convs) deep(c.weight);
    for (BatchNorm& n : b.norms) {
      deep(n.gamma);
      deep(n.beta);
    }
    if (b.has_projection) {
      deep(b.projection.weight);
      deep(b.projection_norm.gamma);
      deep(b.projection_norm.beta);
    }
  }
  for (ExitHead& h : copy.heads_) {
    deep(h.norm.gamma);
    deep(h.norm.beta);
    deep(h.fc.weight);
    deep(h.fc.bias);
  }
  return copy;
}

}  // namespace erde::model
