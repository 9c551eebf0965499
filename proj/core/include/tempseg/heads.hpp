// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Classification and regression heads shared across pyramid levels, span
// decoding, and training-target assignment.

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "tempseg/backbone.hpp"
#include "tempseg/featio.hpp"
#include "tempseg/parameters.hpp"

namespace tempseg::heads {

using backbone::Pyramid;
using tensor::Tensor;

/// Raw head output at one pyramid position.
struct TimestepPrediction {
  std::size_t level = 0;
  std::size_t tau = 0;
  double p = 0.0;
  double d_s = 0.0;  // level-stride units
  double d_e = 0.0;
};

struct ScoredSegment {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
  featio::Modality modality = featio::Modality::kSynthetic;

  bool operator==(const ScoredSegment&) const = default;
};

/// Per-level [lo, hi) ranges of total span length in level-0 feature units.
struct RegressionRanges {
  std::vector<std::pair<double, double>> bounds;

  /// [0, 64), [64, 128), ... doubling, last level open-ended.
  static RegressionRanges defaults(std::size_t levels);
  /// Ranges split at the given interior boundaries (levels - 1 values,
  /// strictly increasing); defaults(levels) when `interior` is empty.
  static RegressionRanges from_boundaries(const std::vector<double>& interior, std::size_t levels);
  /// Throws InvalidArgument unless the ranges partition [0, inf).
  void validate() const;
  /// Level whose range contains `length`.
  std::size_t level_for(double length) const;
};

template <class T>
struct ConvStack {
  Tensor<T> w1, b1, g1, beta1;
  Tensor<T> w2, b2, g2, beta2;
  Tensor<T> w3, b3;
};

template <class T>
struct HeadParams {
  ConvStack<T> cls;
  ConvStack<T> reg;
};

template <class T>
HeadParams<T> register_heads(tensor::ParameterSet<T>& set, std::size_t channels);

/// conv(k=3) -> LN -> ReLU, twice, then conv(k=3) -> sigmoid. One [B, len, 1]
/// tensor per level.
template <class T>
std::vector<Tensor<T>> classify(const Pyramid<T>& pyramid, const HeadParams<T>& p);

/// Same topology with two output channels (d_s, d_e) and a final ReLU.
template <class T>
std::vector<Tensor<T>> regress(const Pyramid<T>& pyramid, const HeadParams<T>& p);

struct DecodeStats {
  std::size_t degenerate = 0;
};

/// start = (t - d_s * s) / fps, end = (t + d_e * s) / fps with t the level-0
/// index of the position, clamped to [0, duration]. Empty when the clamped span
/// has end <= start (counted in `stats`).
std::optional<ScoredSegment> decode_span(const TimestepPrediction& pred,
                                         const std::vector<std::size_t>& strides,
                                         double feature_fps, double duration,
                                         DecodeStats* stats = nullptr);

struct LevelTargets {
  std::size_t length = 0;
  std::size_t stride = 1;
  std::vector<std::uint8_t> labels;
  std::vector<double> d_start;  // level-stride units, valid where labels == 1
  std::vector<double> d_end;
  std::vector<featio::Segment> gt;  // matched segment in seconds
};

/// Targets for one sample: a position is positive iff its level-0 index
/// lies inside a segment whose length (feature units) falls in the level's
/// range. Nested candidates resolve to the shortest segment.
std::vector<LevelTargets> assign_targets(const featio::SegmentSet& annotation,
                                         const std::vector<std::size_t>& lengths,
                                         const std::vector<std::size_t>& strides,
                                         double feature_fps, const RegressionRanges& ranges);

}  // namespace tempseg::heads
