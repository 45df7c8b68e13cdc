// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace erde::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Storage behind a Tensor handle. Gradients are allocated lazily; an empty
/// `grad` means "absent".
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
};

/// Shared handle to a dense row-major double array.
///
/// Copying a Tensor copies the handle, not the storage. Use clone() for a deep
/// copy and detach() for a copy that does not participate in differentiation.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }

  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();  // allocates zeros if absent
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  Tensor clone() const;
  Tensor detach() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Ordered record of differentiable operations.
///
/// Ops record onto the tape made active by a `Tape::Scope` on the calling
/// thread. With no active tape nothing is recorded, which is the inference
/// path. Each thread may own an independent tape.
class Tape {
 public:
  using GradRule = std::function<void()>;

  struct Entry {
    std::string op;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    GradRule rule;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string op, std::vector<std::shared_ptr<TensorNode>> inputs,
              std::shared_ptr<TensorNode> output, GradRule rule);

  /// Replays gradient rules in reverse order starting from d(loss)/d(loss) = 1.
  /// Every gradient touched by the tape is reset first; leaf gradients keep
  /// their previous contents only when `accumulate` is set.
  void backward(const Tensor& loss, bool accumulate = false);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// The tape recording on this thread, or nullptr.
  static Tape* active();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  /// Temporarily disables recording on this thread.
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<Entry> entries_;
};

/// When enabled on a thread, every op checks its inputs for NaN/inf.
void set_strict_finite(bool enabled);
bool strict_finite();

}  // namespace erde::ad
