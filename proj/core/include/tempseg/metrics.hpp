// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Detection metrics: ROC-AUC over sequence confidences, AP at a temporal IoU,
// AR@K averaged over IoU thresholds 0.50:0.05:0.95, and the weighted
// localization score
//
//   Score = (1 AP@.5 + 2 AP@.75 + 2 AP@.9 + 3 AP@.95
//            + 1 AR@30 + 2 AR@20 + 2 AR@10 + 3 AR@5) / 16
//   FinalScore = (AUC + Score) / 2

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tempseg/featio.hpp"
#include "tempseg/heads.hpp"
#include "tempseg/infer.hpp"

namespace tempseg::metrics {

using heads::ScoredSegment;

inline constexpr std::array<double, 4> kApThresholds{0.5, 0.75, 0.9, 0.95};
inline constexpr std::array<std::size_t, 4> kArTopK{30, 20, 10, 5};
inline constexpr std::array<int, 4> kApWeights{1, 2, 2, 3};
inline constexpr std::array<int, 4> kArWeights{1, 2, 2, 3};
inline constexpr int kWeightDenominator = 16;

static_assert(kApWeights[0] + kApWeights[1] + kApWeights[2] + kApWeights[3] + kArWeights[0] +
                      kArWeights[1] + kArWeights[2] + kArWeights[3] ==
                  kWeightDenominator,
              "score weights must sum to one");

/// 0.50, 0.55, ..., 0.95.
std::vector<double> recall_iou_grid();

/// Mann-Whitney AUC: P(conf_forged > conf_genuine) + P(tie) / 2.
/// Throws InvalidArgument("AUC undefined ...") unless both classes occur.
double roc_auc(const std::vector<std::pair<double, bool>>& pairs);

using SamplePredictions = std::vector<ScoredSegment>;

/// Predictions pooled over samples, ranked by score (ties: sample index, then
/// list order); each prediction greedily takes the unmatched same-sample GT
/// with the highest IoU >= tiou. AP = sum (R_i - R_{i-1}) P_i.
/// Throws InvalidArgument("AP undefined ...") with no ground truth at all.
double average_precision(const std::vector<SamplePredictions>& preds,
                         const std::vector<featio::SegmentSet>& gts, double tiou);

/// Top-K predictions per sample, greedy matching per threshold, recall
/// averaged over `grid` (default recall_iou_grid()).
double average_recall_at_k(const std::vector<SamplePredictions>& preds,
                           const std::vector<featio::SegmentSet>& gts, std::size_t k,
                           const std::vector<double>& grid = recall_iou_grid());

struct MetricsReport {
  double auc = 0.0;
  std::array<double, 4> ap{};  // indexed like kApThresholds
  std::array<double, 4> ar{};  // indexed like kArTopK
  double score = 0.0;
  double final_score = 0.0;
};

/// Fills score and final_score from auc, ap and ar.
MetricsReport final_score(MetricsReport components);

/// Per-id union of several annotation sets (e.g. audio and video ground truth
/// for fused predictions): segments concatenated, sorted by start, exact
/// duplicates dropped; duration is the largest given. Ids keep first-seen order.
std::vector<featio::Annotation> merge_annotations(
    const std::vector<std::vector<featio::Annotation>>& sets);

/// Joins predictions to annotations by id and computes every metric.
/// Throws FormatError listing ids present on one side only.
MetricsReport evaluate(const std::vector<infer::PredictionRecord>& preds,
                       const std::vector<featio::Annotation>& gts);

std::string report_json(const MetricsReport& r);
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& r);

}  // namespace tempseg::metrics
