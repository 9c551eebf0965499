// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Optimization loop: AdamW with decoupled weight decay, per-step linear warmup
// followed by cosine decay, padded mini-batches, per-epoch checkpoints and a
// loss log (CSV: epoch,step,lr,total,cls,reg with step-mean losses).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tempseg/detector.hpp"
#include "tempseg/featio.hpp"
#include "tempseg/heads.hpp"
#include "tempseg/loss.hpp"

namespace tempseg::trainer {

struct TrainConfig {
  double lr0 = 1e-3;
  double weight_decay = 1e-2;
  std::size_t warmup_epochs = 5;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// "audio", "video", "synthetic", or empty to accept a manifest holding a
  /// single modality.
  std::string modality;
  bool deterministic = false;
  std::size_t workers = 1;
  /// Interior regression-range boundaries in level-0 feature units, one fewer
  /// than the model's levels; empty selects RegressionRanges::defaults.
  std::vector<double> regression_boundaries;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Learning rate for optimizer step `step` (1-based updates; step 0 gives 0):
/// linear ramp to lr0 over warmup_epochs * steps_per_epoch steps, then
/// lr0 * (1 + cos(pi * progress)) / 2 reaching 0 at the final step.
double lr_schedule(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p). Moments are kept in
/// double regardless of T.
template <class T>
class AdamW {
 public:
  AdamW(std::vector<tensor::Tensor<T>> params, AdamWConfig cfg);

  /// Applies one update from the current gradients. Returns false, leaving
  /// parameters and moments untouched, if any gradient is non-finite.
  bool step(double lr);

  std::size_t steps_taken() const { return t_; }
  std::size_t skipped() const { return skipped_; }

 private:
  std::vector<tensor::Tensor<T>> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
  std::size_t skipped_ = 0;
};

struct TrainSample {
  featio::FeatureSequence sequence;
  featio::Annotation annotation;
};

/// Loads and validates training samples: the requested modality (or the only
/// one present), one feature dim throughout. Throws FormatError.
std::vector<TrainSample> load_training_set(const featio::DatasetManifest& manifest,
                                           const std::string& modality);

struct StepLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // global, 1-based
  double lr = 0.0;
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  bool skipped = false;
};

struct TrainResult {
  std::vector<StepLog> epochs;  // step-mean losses; `step` is the epoch's last step
  std::size_t skipped_steps = 0;
  std::size_t total_steps = 0;
};

struct TrainOptions {
  /// When set: epoch_NNN.tpk, final.tpk and loss.csv are written here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const StepLog&)> on_step;
  heads::RegressionRanges ranges;  // from cfg.regression_boundaries when empty
};

/// Trains `model` in place (initializing it from cfg.seed first).
TrainResult train(Detector<float>& model, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg, const loss::LossConfig& loss_cfg,
                  const TrainOptions& options = {});

/// True when TEMPSEG_DETERMINISTIC=1 is set in the environment.
bool deterministic_from_env();

}  // namespace tempseg::trainer
