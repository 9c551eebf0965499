// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Full detector: backbone pyramid plus shared heads, with parameter
// initialization, batching of feature sequences and checkpoint I/O.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tempseg/backbone.hpp"
#include "tempseg/featio.hpp"
#include "tempseg/heads.hpp"
#include "tempseg/parameters.hpp"

namespace tempseg {

using backbone::ModelConfig;

/// Prior probability of the classification head right after initialization.
inline constexpr double kClassPrior = 0.01;
/// Initial value of the regression head's output bias; see initialize().
inline constexpr double kRegressionBiasInit = 2.5;

template <class T>
struct Batch {
  tensor::Tensor<T> x;  // [B, M, dim]
  tensor::Mask mask;    // B * M
  std::size_t batch = 0;
  std::size_t length = 0;
};

/// Stacks sequences into one padded batch of `length` rows each (truncating
/// longer ones). All sequences must share `dim`.
template <class T>
Batch<T> make_batch(const std::vector<const featio::FeatureSequence*>& seqs, std::size_t length);

template <class T>
class Detector {
 public:
  struct Output {
    backbone::Pyramid<T> pyramid;
    std::vector<tensor::Tensor<T>> cls;  // per level [B, len, 1]
    std::vector<tensor::Tensor<T>> reg;  // per level [B, len, 2]
  };

  /// Registers parameters; values are all zero until initialize() or load().
  explicit Detector(const ModelConfig& config);

  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;
  Detector(Detector&&) = default;
  Detector& operator=(Detector&&) = default;

  /// Fan-in scaled truncated-normal projections, orthogonal recurrent blocks,
  /// unit LayerNorm gains, zero biases, zero final head weights, class prior
  /// bias, and a positive regression bias so the ReLU output is trainable.
  void initialize(std::uint64_t seed);

  /// Every parameter drawn from N(0, std^2); used by gradient checks so no
  /// path is trivially zero.
  void randomize(std::uint64_t seed, double std);

  /// Copies parameter values (not gradients) from a detector with the same
  /// configuration.
  void copy_values_from(const Detector& other);

  Output forward(const tensor::Tensor<T>& x, const tensor::Mask& mask) const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  const ModelConfig& config() const { return config_; }
  tensor::ParameterSet<T>& parameters() { return params_; }
  const tensor::ParameterSet<T>& parameters() const { return params_; }

 private:
  ModelConfig config_;
  tensor::ParameterSet<T> params_;
  backbone::BackboneParams<T> backbone_;
  heads::HeadParams<T> heads_;
};

}  // namespace tempseg
