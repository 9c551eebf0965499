// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <thread>

#include "tempseg/error.hpp"

namespace tempseg::trainer {

namespace ts = tempseg::tensor;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("train config: " + m); };
  if (!(lr0 >= 0.0)) fail("lr0 must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (warmup_epochs > epochs) fail("warmup_epochs must not exceed epochs");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (workers < 1) fail("workers must be >= 1");
  if (!modality.empty()) featio::parse_modality(modality);
  double prev = 0.0;
  for (double b : regression_boundaries) {
    if (!(b > prev) || !std::isfinite(b)) fail("regression_boundaries must be finite, positive and increasing");
    prev = b;
  }
}

double lr_schedule(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg) {
  const double warm = static_cast<double>(cfg.warmup_epochs * steps_per_epoch);
  const double total = static_cast<double>(cfg.epochs * steps_per_epoch);
  const double s = static_cast<double>(step);
  if (s <= warm && warm > 0.0) return cfg.lr0 * s / warm;
  if (total <= warm) return cfg.lr0;
  const double progress = std::min(1.0, (s - warm) / (total - warm));
  return cfg.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <class T>
AdamW<T>::AdamW(std::vector<ts::Tensor<T>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

template <class T>
bool AdamW<T>::step(double lr) {
  for (const auto& p : params_) {
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        ++skipped_;
        return false;
      }
    }
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].mutable_data();
    const auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      const double wj = static_cast<double>(w[j]);
      w[j] = static_cast<T>(wj - lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * wj));
    }
  }
  return true;
}

template class AdamW<float>;
template class AdamW<double>;

std::vector<TrainSample> load_training_set(const featio::DatasetManifest& manifest,
                                           const std::string& modality) {
  std::optional<featio::Modality> want;
  if (!modality.empty()) want = featio::parse_modality(modality);
  std::vector<TrainSample> out;
  for (const auto& e : manifest.entries) {
    if (want && e.modality != *want) continue;
    if (!want && !out.empty() && e.modality != out.front().sequence.modality) {
      throw FormatError("manifest mixes modalities; set modality to train one model per modality");
    }
    TrainSample s{featio::load_features(e.feature_path), e.annotation};
    if (!out.empty() && s.sequence.dim != out.front().sequence.dim) {
      throw FormatError("dim mismatch across manifest: " + s.sequence.id + " has " +
                        std::to_string(s.sequence.dim) + ", expected " +
                        std::to_string(out.front().sequence.dim));
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw FormatError("no training samples" + (modality.empty() ? "" : " for modality " + modality));
  return out;
}

bool deterministic_from_env() {
  const char* v = std::getenv("TEMPSEG_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

namespace {

struct Shard {
  Batch<float> batch;
  loss::BatchTargets targets;
};

std::vector<ts::Mask> level_masks(const ts::Mask& mask, std::size_t batch, std::size_t len,
                                  const ModelConfig& mc) {
  std::vector<ts::Mask> out{mask};
  const auto lengths = backbone::pyramid_lengths(len, mc.n_levels, mc.downsample_stride);
  for (std::size_t l = 1; l < mc.n_levels; ++l) {
    out.push_back(backbone::downsample_mask(out.back(), batch, lengths[l - 1], mc.downsample_stride));
  }
  return out;
}

Shard make_shard(const std::vector<TrainSample>& data, const std::vector<std::size_t>& idx,
                 const ModelConfig& mc, const heads::RegressionRanges& ranges) {
  std::vector<const featio::FeatureSequence*> seqs;
  std::vector<const featio::SegmentSet*> anns;
  std::vector<double> fps;
  for (const std::size_t i : idx) {
    seqs.push_back(&data[i].sequence);
    anns.push_back(&data[i].annotation.segments);
    fps.push_back(data[i].sequence.feature_fps);
  }
  Shard s{make_batch<float>(seqs, mc.max_len), {}};
  const auto lengths = backbone::pyramid_lengths(mc.max_len, mc.n_levels, mc.downsample_stride);
  std::vector<std::size_t> strides(mc.n_levels, 1);
  for (std::size_t l = 1; l < mc.n_levels; ++l) strides[l] = strides[l - 1] * mc.downsample_stride;
  s.targets = loss::collect_targets(anns, fps, lengths, strides,
                                    level_masks(s.batch.mask, s.batch.batch, mc.max_len, mc), ranges);
  return s;
}

struct ShardLoss {
  double cls = 0.0;
  double reg = 0.0;
};

ShardLoss run_shard(const Detector<float>& model, const Shard& shard,
                    const loss::LossConfig& loss_cfg, double normalizer) {
  ts::Tape<float> tape;
  ts::TapeScope<float> scope(tape);
  const auto out = model.forward(shard.batch.x, shard.batch.mask);
  const auto lb = loss::total_loss(out.cls, out.reg, shard.targets, loss_cfg, normalizer);
  tape.backward(lb.total);
  return {lb.cls, lb.reg};
}

void write_csv_row(std::ofstream& f, const StepLog& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g,%.9g\n", s.epoch, s.step, s.lr, s.total,
                s.cls, s.reg);
  f << buf;
  f.flush();
}

}  // namespace

TrainResult train(Detector<float>& model, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg_in, const loss::LossConfig& loss_cfg,
                  const TrainOptions& options) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  loss_cfg.validate();
  if (cfg.deterministic || deterministic_from_env()) {
    cfg.deterministic = true;
    cfg.workers = 1;
  }
  if (data.empty()) throw InvalidArgument("train: empty training set");
  const ModelConfig& mc = model.config();
  if (data.front().sequence.dim != mc.input_dim) {
    throw FormatError("train: data dim " + std::to_string(data.front().sequence.dim) +
                      " does not match model input_dim " + std::to_string(mc.input_dim));
  }
  const heads::RegressionRanges ranges =
      options.ranges.bounds.empty()
          ? heads::RegressionRanges::from_boundaries(cfg.regression_boundaries, mc.n_levels)
          : options.ranges;
  ranges.validate();
  if (ranges.bounds.size() != mc.n_levels) throw InvalidArgument("train: one regression range per level");

  model.initialize(cfg.seed);
  auto params = model.parameters().tensors();
  AdamW<float> opt(params, {0.9, 0.999, 1e-8, cfg.weight_decay});

  std::vector<std::unique_ptr<Detector<float>>> replicas;
  for (std::size_t w = 1; w < cfg.workers; ++w) replicas.push_back(std::make_unique<Detector<float>>(mc));

  std::ofstream csv;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    csv.open(*options.out_dir / "loss.csv", std::ios::trunc);
    if (!csv) throw FormatError("cannot write " + (*options.out_dir / "loss.csv").string());
    csv << "epoch,step,lr,total,cls,reg\n";
  }

  const std::size_t steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order(data.size());
  TrainResult result;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    StepLog mean{epoch, 0, 0.0, 0.0, 0.0, 0.0, false};
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      ++step;
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const std::size_t n_shards = std::min(cfg.workers, hi - lo);

      std::vector<Shard> shards;
      std::size_t positives = 0;
      for (std::size_t w = 0; w < n_shards; ++w) {
        const std::size_t a = lo + (hi - lo) * w / n_shards;
        const std::size_t z = lo + (hi - lo) * (w + 1) / n_shards;
        std::vector<std::size_t> idx(order.begin() + static_cast<long>(a), order.begin() + static_cast<long>(z));
        shards.push_back(make_shard(data, idx, mc, ranges));
        positives += shards.back().targets.num_positive;
      }
      const double norm = static_cast<double>(std::max<std::size_t>(positives, 1));

      model.parameters().zero_grad();
      std::vector<ShardLoss> losses(n_shards);
      if (n_shards == 1) {
        losses[0] = run_shard(model, shards[0], loss_cfg, norm);
      } else {
        std::vector<std::exception_ptr> errors(n_shards);
        std::vector<std::thread> threads;
        for (std::size_t w = 1; w < n_shards; ++w) {
          Detector<float>& rep = *replicas[w - 1];
          rep.copy_values_from(model);
          rep.parameters().zero_grad();
          threads.emplace_back([&, w] {
            try {
              losses[w] = run_shard(*replicas[w - 1], shards[w], loss_cfg, norm);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
        try {
          losses[0] = run_shard(model, shards[0], loss_cfg, norm);
        } catch (...) {
          errors[0] = std::current_exception();
        }
        for (auto& t : threads) t.join();
        for (const auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
        // Fixed shard order keeps the reduction reproducible.
        for (std::size_t w = 1; w < n_shards; ++w) {
          const auto rep_params = replicas[w - 1]->parameters().tensors();
          for (std::size_t p = 0; p < params.size(); ++p) {
            if (!rep_params[p].has_grad()) continue;
            auto dst = ts::grad_buffer(params[p]);
            const auto src = rep_params[p].grad();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
          }
        }
      }

      StepLog log{epoch, step, lr_schedule(step, steps_per_epoch, cfg), 0.0, 0.0, 0.0, false};
      for (const auto& l : losses) {
        log.cls += l.cls;
        log.reg += l.reg;
      }
      log.total = loss_cfg.lambda * log.cls + log.reg;
      log.skipped = !opt.step(log.lr);
      if (log.skipped) ++result.skipped_steps;
      if (options.on_step) options.on_step(log);

      mean.step = step;
      mean.lr = log.lr;
      mean.total += log.total / steps_per_epoch;
      mean.cls += log.cls / steps_per_epoch;
      mean.reg += log.reg / steps_per_epoch;
    }
    result.epochs.push_back(mean);
    if (options.out_dir) {
      write_csv_row(csv, mean);
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03zu.tpk", epoch);
      model.save(*options.out_dir / name);
    }
  }
  result.total_steps = step;
  if (options.out_dir) model.save(*options.out_dir / "final.tpk");
  return result;
}

}  // namespace tempseg::trainer
