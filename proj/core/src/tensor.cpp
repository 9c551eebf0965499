// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tempseg/error.hpp"

namespace tempseg::tensor {

namespace {

thread_local bool t_check_finite = false;
thread_local KinkMonitor t_kinks;
std::string g_fault_op;  // set only from tests, before any worker starts

template <class T>
Tape<T>*& tape_slot() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void set_check_finite(bool on) { t_check_finite = on; }
bool check_finite_enabled() { return t_check_finite; }

void inject_backward_fault(std::string op) { g_fault_op = std::move(op); }
void clear_backward_fault() { g_fault_op.clear(); }

KinkMonitor& kink_monitor() { return t_kinks; }

void note_branch(bool taken) {
  if (!t_kinks.enabled) return;
  // FNV-1a style mixing of one bit.
  t_kinks.fingerprint ^= taken ? 0x9e3779b97f4a7c15ULL : 0x632be59bd9b4e019ULL;
  t_kinks.fingerprint *= 0x100000001b3ULL;
}

void note_near_kink() {
  if (t_kinks.enabled) t_kinks.near_kink = true;
}

// --- Tensor ------------------------------------------------------------------

template <class T>
Tensor<T> Tensor<T>::constant(Shape shape, std::vector<T> values) {
  if (numel(shape) != values.size()) {
    throw InvalidArgument("tensor: " + std::to_string(values.size()) +
                          " values for shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  std::vector<T> values(numel(shape), T(0));
  return constant(std::move(shape), std::move(values));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T v) {
  return constant({1}, {v});
}

template <class T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  auto t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <class T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_->leaf) throw InvalidArgument("tensor: mutable_data on an op result");
  return node_->value;
}

template <class T>
T Tensor<T>::item() const {
  if (node_->value.size() != 1) {
    throw InvalidArgument("tensor: item() on shape " + shape_str(node_->shape));
  }
  return node_->value[0];
}

template <class T>
void Tensor<T>::zero_grad() {
  node_->grad.clear();
}

// --- Tape --------------------------------------------------------------------

template <class T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw InvalidArgument("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) {
    throw InvalidArgument("backward: loss does not depend on any parameter");
  }
  for (auto& n : nodes_) n->grad.clear();

  auto g = grad_buffer(loss);
  g[0] += T(1);
  if (loss.node().leaf) return;
  if (nodes_.empty()) throw InvalidArgument("backward: empty tape");

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& n = **it;
    if (n.grad.empty() || !n.backward) continue;
    if (!g_fault_op.empty() && n.op == g_fault_op) {
      for (auto& v : n.grad) v = -v;
      n.backward(n);
      for (auto& v : n.grad) v = -v;
    } else {
      n.backward(n);
    }
  }
}

template <class T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}

template <class T>
TapeScope<T>::~TapeScope() {
  tape_slot<T>() = previous_;
}

template <class T>
Tape<T>* active_tape() {
  return tape_slot<T>();
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::string_view op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      BackwardFn<T> backward) {
  if (t_check_finite) {
    for (const T& v : value) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite value produced by " + std::string(op));
      }
    }
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->leaf = false;

  Tape<T>* tape = tape_slot<T>();
  bool needs = false;
  for (const Tensor<T>* in : inputs) {
    if (in && in->defined() && in->requires_grad()) needs = true;
  }
  if (tape && needs) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
std::span<T> grad_buffer(const Tensor<T>& t) {
  auto& n = t.node();
  if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

#define TEMPSEG_INSTANTIATE(T)                                                     \
  template class Tensor<T>;                                                        \
  template class Tape<T>;                                                          \
  template class TapeScope<T>;                                                     \
  template Tape<T>* active_tape<T>();                                              \
  template Tensor<T> make_result<T>(Shape, std::vector<T>, std::string_view,       \
                                    std::initializer_list<const Tensor<T>*>,       \
                                    BackwardFn<T>);                                \
  template std::span<T> grad_buffer<T>(const Tensor<T>&);

TEMPSEG_INSTANTIATE(float)
TEMPSEG_INSTANTIATE(double)

#undef TEMPSEG_INSTANTIATE

}  // namespace tempseg::tensor
