// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Training objective: focal classification loss over every valid pyramid
// position plus 1 - DIoU over positives, normalized by the positive count:
//
//   total = (lambda * sum_t focal(t) + sum_{t in pos} (1 - DIoU_t)) / max(#pos, 1)

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tempseg/featio.hpp"
#include "tempseg/heads.hpp"
#include "tempseg/tensor.hpp"

namespace tempseg::loss {

using tensor::Tensor;

inline constexpr double kProbClamp = 1e-7;

struct LossConfig {
  double lambda = 0.01;
  double focal_focusing = 2.0;  // gamma
  double focal_balance = 0.25;  // alpha
  /// Use the positive-only variant -log p - gamma (1 - p)^alpha instead of the
  /// standard focal loss.
  bool paper_literal_focal = false;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// Unnormalized per-position classification loss, probability clamped to
/// [1e-7, 1 - 1e-7].
double focal_term(double p, bool positive, const LossConfig& cfg);

/// Sum of focal_term over valid positions divided by max(#positive, 1).
double focal_loss(const std::vector<double>& p, const std::vector<std::uint8_t>& labels,
                  const std::vector<std::uint8_t>& valid, const LossConfig& cfg);

/// 1-D distance IoU: IoU - ((c_p - c_g) / c)^2 with c the enclosing length.
/// Throws InvalidArgument when both spans are empty.
double diou_1d(const featio::Segment& pred, const featio::Segment& gt);

/// Plain 1-D IoU; 0 when the union is empty.
double temporal_iou(const featio::Segment& a, const featio::Segment& b);

/// Differentiable sum of focal_term over positions with valid != 0.
template <class T>
Tensor<T> focal_sum(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels,
                    const std::vector<std::uint8_t>& valid, const LossConfig& cfg);

struct RegressionTarget {
  std::size_t position = 0;  // row of the [N, 2] offset tensor
  double center = 0.0;       // level-0 index of the position
  double stride = 1.0;
  double feature_fps = 1.0;
  featio::Segment gt{0.0, 0.0};  // seconds
};

/// Differentiable sum of (1 - DIoU) between spans decoded from offsets [N, 2]
/// (unclamped, seconds) and their targets.
template <class T>
Tensor<T> diou_sum(const Tensor<T>& offsets, const std::vector<RegressionTarget>& targets);

/// Targets of a padded batch flattened per level.
struct BatchTargets {
  struct Level {
    std::vector<std::uint8_t> valid;   // B * len
    std::vector<std::uint8_t> labels;  // B * len
    std::vector<RegressionTarget> positives;
  };
  std::vector<Level> levels;
  std::size_t num_positive = 0;
};

/// Assigns targets for each sample and flattens them over the batch. Positions
/// outside the level mask are neither positive nor counted.
BatchTargets collect_targets(const std::vector<const featio::SegmentSet*>& annotations,
                             const std::vector<double>& feature_fps,
                             const std::vector<std::size_t>& lengths,
                             const std::vector<std::size_t>& strides,
                             const std::vector<tensor::Mask>& masks,
                             const heads::RegressionRanges& ranges);

template <class T>
struct LossBreakdown {
  Tensor<T> total;
  double cls = 0.0;  // focal sum / normalizer
  double reg = 0.0;  // DIoU sum / normalizer
  std::size_t num_positive = 0;
};

/// `normalizer` overrides max(#pos, 1), e.g. with the full-batch count when a
/// batch is split across workers.
template <class T>
LossBreakdown<T> total_loss(const std::vector<Tensor<T>>& cls, const std::vector<Tensor<T>>& reg,
                            const BatchTargets& targets, const LossConfig& cfg,
                            double normalizer = 0.0);

}  // namespace tempseg::loss
