// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/autodiff/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "erde/error.hpp"

namespace erde::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_strict_finite = false;

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in shape " + to_string(shape));
  }
  if (element_count(shape) != data.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " needs " +
                     std::to_string(element_count(shape)) + " elements, got " +
                     std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->data[0];
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor out(node_->shape, node_->data, node_->requires_grad);
  out.node_->grad = node_->grad;
  return out;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

void Tape::record(std::string op, std::vector<std::shared_ptr<TensorNode>> inputs,
                  std::shared_ptr<TensorNode> output, GradRule rule) {
  entries_.push_back(Entry{std::move(op), std::move(inputs), std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& loss, bool accumulate) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (entries_.empty()) throw Error("backward: tape is empty");

  std::unordered_set<const TensorNode*> produced;
  produced.reserve(entries_.size());
  for (const Entry& e : entries_) produced.insert(e.output.get());
  if (!produced.contains(loss.node().get())) throw Error("backward: loss was not produced on this tape");

  auto reset = [](TensorNode& node) { node.grad.assign(node.data.size(), 0.0); };
  for (const Entry& e : entries_) {
    reset(*e.output);
    for (const auto& in : e.inputs) {
      if (!in->requires_grad) continue;
      const bool leaf = !produced.contains(in.get());
      if (!leaf || !accumulate || in->grad.empty()) reset(*in);
    }
  }

  loss.node()->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->rule();
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape::Pause::Pause() : previous_(g_active_tape) { g_active_tape = nullptr; }
Tape::Pause::~Pause() { g_active_tape = previous_; }

void set_strict_finite(bool enabled) { g_strict_finite = enabled; }
bool strict_finite() { return g_strict_finite; }

}  // namespace erde::ad
