// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tempseg/checkpoint.hpp"
#include "tempseg/error.hpp"
#include "tempseg/tensor.hpp"

namespace tempseg::tensor {

/// Trainable tensors in registration order; that order is the checkpoint order.
template <class T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, Shape shape, std::vector<T> init) {
    for (const auto& [n, _] : entries_) {
      if (n == name) throw InvalidArgument("duplicate parameter name " + name);
    }
    auto t = Tensor<T>::parameter(std::move(shape), std::move(init));
    entries_.emplace_back(std::move(name), t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  std::vector<NamedArray> to_arrays() const {
    std::vector<NamedArray> out;
    for (const auto& [name, t] : entries_) {
      NamedArray a{name, t.shape(), {}};
      a.data.reserve(t.size());
      for (T v : t.data()) a.data.push_back(static_cast<float>(v));
      out.push_back(std::move(a));
    }
    return out;
  }

  /// Copies values by name; every registered parameter must be present with
  /// the same shape.
  void load_arrays(const std::vector<NamedArray>& arrays) {
    if (arrays.size() != entries_.size()) {
      throw FormatError("checkpoint has " + std::to_string(arrays.size()) +
                        " parameters, model expects " + std::to_string(entries_.size()));
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& [name, t] = entries_[i];
      const NamedArray& a = arrays[i];
      if (a.name != name || a.shape != t.shape()) {
        throw FormatError("checkpoint parameter " + a.name + " " + shape_str(a.shape) +
                          " does not match model parameter " + name + " " +
                          shape_str(t.shape()));
      }
      auto dst = t.mutable_data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(a.data[j]);
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

}  // namespace tempseg::tensor
