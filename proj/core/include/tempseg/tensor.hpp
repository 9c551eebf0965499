// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Dense tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to a shared node. Nodes created while a Tape is
// active (see TapeScope) and depending on a requires_grad input are recorded
// in creation order, which is a topological order of the graph; backward walks
// the record in reverse. With no active tape, ops compute values only.
//
// Everything is templated on the scalar: float for training, double for
// finite-difference gradient checks.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tempseg::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
struct Node;

template <class T>
using BackwardFn = std::function<void(const Node<T>& out)>;

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool leaf = true;
  std::string_view op = "leaf";
  BackwardFn<T> backward;
};

template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<T> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(T v);
  /// Trainable leaf: gradients accumulate into grad() across backward calls.
  static Tensor parameter(Shape shape, std::vector<T> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  /// Only valid on leaves; interior values are immutable once computed.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad();

  std::string_view op() const { return node_->op; }
  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& handle() const { return node_; }

  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
class Tape {
 public:
  void record(std::shared_ptr<Node<T>> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Propagates d(loss)/d(leaf) into every requires_grad leaf reachable from
  /// the recorded ops. Leaf gradients accumulate across calls; interior
  /// gradients are reset on each call.
  void backward(const Tensor<T>& loss);

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

/// Makes `tape` the calling thread's active tape for the scope's lifetime.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <class T>
Tape<T>* active_tape();

/// Builds an op result. Records it on the active tape when any input needs a
/// gradient; otherwise the backward rule is dropped.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::string_view op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      BackwardFn<T> backward);

/// Gradient buffer of `t`, allocated (zeroed) on first use. Backward rules
/// must accumulate (+=) into it.
template <class T>
std::span<T> grad_buffer(const Tensor<T>& t);

// --- Debug and test hooks ----------------------------------------------------

/// When enabled, every op result is scanned and a NumericError naming the op
/// is thrown on NaN/Inf.
void set_check_finite(bool on);
bool check_finite_enabled();

/// Negates the backward contribution of the named op (fault-injection tests).
void inject_backward_fault(std::string op);
void clear_backward_fault();

/// Non-differentiable decisions (relu at 0, max/min selections, clamps) are
/// folded into a per-thread fingerprint so finite-difference checks can tell
/// when a perturbation crossed a kink.
struct KinkMonitor {
  bool enabled = false;
  std::uint64_t fingerprint = 0;
  bool near_kink = false;

  void reset() {
    fingerprint = 0;
    near_kink = false;
  }
};
KinkMonitor& kink_monitor();
void note_branch(bool taken);
void note_near_kink();

}  // namespace tempseg::tensor
