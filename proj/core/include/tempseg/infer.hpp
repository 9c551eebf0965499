// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Inference: thresholded proposals from every pyramid level, hard NMS,
// sequence confidence, and audio/video fusion.
//
// Prediction file: JSON Lines
//   {"id", "confidence", "segments": [{"start", "end", "score", "modality"}]}

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "tempseg/detector.hpp"
#include "tempseg/featio.hpp"
#include "tempseg/heads.hpp"

namespace tempseg::infer {

using heads::ScoredSegment;

struct InferConfig {
  double pre_nms_threshold = 0.1;
  std::size_t pre_nms_topk = 200;
  double nms_iou = 0.6;
  std::size_t max_outputs = 50;

  void validate() const;
  bool operator==(const InferConfig&) const = default;
};

/// Score descending, then earlier start, then shorter span.
bool ranks_before(const ScoredSegment& a, const ScoredSegment& b);

/// Runs the detector on one full-length sequence (batch of one) and returns
/// decoded spans of every valid position with p >= pre_nms_threshold, top-k
/// by score.
std::vector<ScoredSegment> propose(const Detector<float>& model, const featio::FeatureSequence& seq,
                                   const InferConfig& cfg, heads::DecodeStats* stats = nullptr);

/// Greedy hard NMS: keep a segment iff its IoU with every kept one is
/// <= iou_threshold; at most max_outputs in rank order.
std::vector<ScoredSegment> nms(std::vector<ScoredSegment> segments, double iou_threshold,
                               std::size_t max_outputs);

/// Max score, or 0 for an empty list.
double sequence_confidence(const std::vector<ScoredSegment>& kept);

struct PredictionRecord {
  std::string id;
  double confidence = 0.0;
  std::vector<ScoredSegment> segments;

  bool operator==(const PredictionRecord&) const = default;
};

PredictionRecord predict(const Detector<float>& model, const featio::FeatureSequence& seq,
                         const InferConfig& cfg, heads::DecodeStats* stats = nullptr);

/// conf = max of both; segments = audio then video, each tagged with its
/// source modality. Throws InvalidArgument on an id mismatch.
PredictionRecord fuse_modalities(const PredictionRecord& audio, const PredictionRecord& video);

/// Pairs records by id. Throws FormatError naming ids present in only one set.
std::vector<PredictionRecord> fuse_predictions(const std::vector<PredictionRecord>& audio,
                                               const std::vector<PredictionRecord>& video);

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& rows);

}  // namespace tempseg::infer
