// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/loss.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "tempseg/error.hpp"
#include "tempseg/ops.hpp"

namespace tempseg::loss {

namespace ts = tempseg::tensor;

namespace {

struct FocalEval {
  double value;
  double dp;  // d value / d p
};

FocalEval focal_eval(double p_raw, bool positive, const LossConfig& cfg) {
  const bool clamped = p_raw < kProbClamp || p_raw > 1.0 - kProbClamp;
  if (ts::kink_monitor().enabled) ts::note_branch(clamped);
  const double p = std::clamp(p_raw, kProbClamp, 1.0 - kProbClamp);
  const double g = cfg.focal_focusing;
  const double a = cfg.focal_balance;
  FocalEval r{0.0, 0.0};
  if (cfg.paper_literal_focal) {
    // -log p - gamma (1 - p)^alpha, positives only.
    if (!positive) return r;
    r.value = -std::log(p) - g * std::pow(1.0 - p, a);
    r.dp = -1.0 / p + g * a * std::pow(1.0 - p, a - 1.0);
  } else if (positive) {
    const double q = 1.0 - p;
    r.value = -a * std::pow(q, g) * std::log(p);
    r.dp = a * (g * std::pow(q, g - 1.0) * std::log(p) - std::pow(q, g) / p);
  } else {
    const double q = 1.0 - p;
    r.value = -(1.0 - a) * std::pow(p, g) * std::log(q);
    r.dp = (1.0 - a) * (-g * std::pow(p, g - 1.0) * std::log(q) + std::pow(p, g) / q);
  }
  if (clamped) r.dp = 0.0;
  return r;
}

struct DiouEval {
  double value;
  double ds;  // d DIoU / d start
  double de;  // d DIoU / d end
};

DiouEval diou_eval(double s, double e, double gs, double ge) {
  const bool track = ts::kink_monitor().enabled;
  const double lo = std::max(s, gs);
  const double hi = std::min(e, ge);
  const bool overlap = hi > lo;
  const double inter = overlap ? hi - lo : 0.0;
  const double uni = (e - s) + (ge - gs) - inter;
  const double cs = std::min(s, gs);
  const double ce = std::max(e, ge);
  const double c = ce - cs;
  if (!(c > 0.0) || !(uni > 0.0)) throw InvalidArgument("diou: both spans are empty");
  if (track) {
    ts::note_branch(overlap);
    ts::note_branch(s > gs);
    ts::note_branch(e < ge);
  }
  const double iou = inter / uni;
  const double rho = 0.5 * (s + e) - 0.5 * (gs + ge);
  DiouEval r{iou - (rho * rho) / (c * c), 0.0, 0.0};

  const double di_ds = (overlap && s > gs) ? -1.0 : 0.0;
  const double di_de = (overlap && e < ge) ? 1.0 : 0.0;
  const double du_ds = -1.0 - di_ds;
  const double du_de = 1.0 - di_de;
  const double diou_ds = (di_ds * uni - inter * du_ds) / (uni * uni);
  const double diou_de = (di_de * uni - inter * du_de) / (uni * uni);
  const double dc_ds = s < gs ? -1.0 : 0.0;
  const double dc_de = e > ge ? 1.0 : 0.0;
  // d(rho^2 / c^2) = 2 rho drho / c^2 - 2 rho^2 dc / c^3, drho = 1/2.
  const double dpen_ds = rho / (c * c) - 2.0 * rho * rho * dc_ds / (c * c * c);
  const double dpen_de = rho / (c * c) - 2.0 * rho * rho * dc_de / (c * c * c);
  r.ds = diou_ds - dpen_ds;
  r.de = diou_de - dpen_de;
  return r;
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda >= 0.0)) throw InvalidArgument("loss config: lambda must be >= 0");
  if (!(focal_focusing >= 0.0)) throw InvalidArgument("loss config: focal_focusing must be >= 0");
  if (!(focal_balance >= 0.0 && focal_balance <= 1.0)) {
    throw InvalidArgument("loss config: focal_balance must lie in [0, 1]");
  }
}

double focal_term(double p, bool positive, const LossConfig& cfg) {
  return focal_eval(p, positive, cfg).value;
}

double focal_loss(const std::vector<double>& p, const std::vector<std::uint8_t>& labels,
                  const std::vector<std::uint8_t>& valid, const LossConfig& cfg) {
  if (p.size() != labels.size() || p.size() != valid.size()) {
    throw InvalidArgument("focal_loss: size mismatch");
  }
  double sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!valid[i]) continue;
    sum += focal_term(p[i], labels[i] != 0, cfg);
    pos += labels[i] != 0;
  }
  return sum / static_cast<double>(std::max<std::size_t>(pos, 1));
}

double diou_1d(const featio::Segment& pred, const featio::Segment& gt) {
  return diou_eval(pred.start, pred.end, gt.start, gt.end).value;
}

double temporal_iou(const featio::Segment& a, const featio::Segment& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

template <class T>
Tensor<T> focal_sum(const Tensor<T>& probs, const std::vector<std::uint8_t>& labels,
                    const std::vector<std::uint8_t>& valid, const LossConfig& cfg) {
  const std::size_t n = probs.size();
  if (labels.size() != n || valid.size() != n) {
    throw InvalidArgument("focal_sum: " + std::to_string(n) + " probabilities, " +
                          std::to_string(labels.size()) + " labels, " +
                          std::to_string(valid.size()) + " mask entries");
  }
  auto pd = probs.data();
  double total = 0.0;
  std::vector<T> dp(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const FocalEval f = focal_eval(static_cast<double>(pd[i]), labels[i] != 0, cfg);
    total += f.value;
    dp[i] = static_cast<T>(f.dp);
  }
  return ts::make_result<T>({}, {static_cast<T>(total)}, "focal_loss", {&probs},
                            [probs, dp = std::move(dp)](const ts::Node<T>& out) {
                              auto g = ts::grad_buffer(probs);
                              const T go = out.grad[0];
                              for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * dp[i];
                            });
}

template <class T>
Tensor<T> diou_sum(const Tensor<T>& offsets, const std::vector<RegressionTarget>& targets) {
  if (offsets.rank() != 2 || offsets.dim(1) != 2) {
    throw InvalidArgument("diou_sum: offsets must be [N, 2], got " +
                          ts::shape_str(offsets.shape()));
  }
  auto od = offsets.data();
  double total = 0.0;
  std::vector<std::pair<std::size_t, std::array<T, 2>>> grads;
  grads.reserve(targets.size());
  for (const auto& tg : targets) {
    if (tg.position >= offsets.dim(0)) throw InvalidArgument("diou_sum: position out of range");
    const double k = tg.stride / tg.feature_fps;
    const double s = tg.center / tg.feature_fps - od[2 * tg.position] * k;
    const double e = tg.center / tg.feature_fps + od[2 * tg.position + 1] * k;
    const DiouEval d = diou_eval(s, e, tg.gt.start, tg.gt.end);
    total += 1.0 - d.value;
    // loss = 1 - DIoU; ds/dd_s = -k, de/dd_e = +k.
    grads.push_back({tg.position, {static_cast<T>(d.ds * k), static_cast<T>(-d.de * k)}});
  }
  return ts::make_result<T>({}, {static_cast<T>(total)}, "diou_loss", {&offsets},
                            [offsets, grads = std::move(grads)](const ts::Node<T>& out) {
                              auto g = ts::grad_buffer(offsets);
                              const T go = out.grad[0];
                              for (const auto& [pos, gr] : grads) {
                                g[2 * pos] += go * gr[0];
                                g[2 * pos + 1] += go * gr[1];
                              }
                            });
}

BatchTargets collect_targets(const std::vector<const featio::SegmentSet*>& annotations,
                             const std::vector<double>& feature_fps,
                             const std::vector<std::size_t>& lengths,
                             const std::vector<std::size_t>& strides,
                             const std::vector<tensor::Mask>& masks,
                             const heads::RegressionRanges& ranges) {
  const std::size_t batch = annotations.size();
  if (feature_fps.size() != batch || masks.size() != lengths.size()) {
    throw InvalidArgument("collect_targets: batch or level counts disagree");
  }
  BatchTargets out;
  out.levels.resize(lengths.size());
  for (std::size_t l = 0; l < lengths.size(); ++l) {
    out.levels[l].valid = masks[l];
    out.levels[l].labels.assign(batch * lengths[l], 0);
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const auto per_level =
        heads::assign_targets(*annotations[b], lengths, strides, feature_fps[b], ranges);
    for (std::size_t l = 0; l < lengths.size(); ++l) {
      const auto& lt = per_level[l];
      auto& dst = out.levels[l];
      for (std::size_t tau = 0; tau < lt.length; ++tau) {
        const std::size_t flat = b * lengths[l] + tau;
        if (!lt.labels[tau] || !dst.valid[flat]) continue;
        dst.labels[flat] = 1;
        dst.positives.push_back(
            {flat, static_cast<double>(backbone::to_feature_index(tau, lt.stride)),
             static_cast<double>(lt.stride), feature_fps[b], lt.gt[tau]});
        ++out.num_positive;
      }
    }
  }
  return out;
}

template <class T>
LossBreakdown<T> total_loss(const std::vector<Tensor<T>>& cls, const std::vector<Tensor<T>>& reg,
                            const BatchTargets& targets, const LossConfig& cfg,
                            double normalizer) {
  if (cls.size() != targets.levels.size() || reg.size() != targets.levels.size()) {
    throw InvalidArgument("total_loss: level count mismatch");
  }
  const double norm =
      normalizer > 0.0 ? normalizer : static_cast<double>(std::max<std::size_t>(targets.num_positive, 1));
  Tensor<T> focal, diou;
  for (std::size_t l = 0; l < cls.size(); ++l) {
    const auto& lv = targets.levels[l];
    Tensor<T> f = focal_sum(cls[l], lv.labels, lv.valid, cfg);
    focal = focal.defined() ? ts::add(focal, f) : f;
    if (lv.positives.empty()) continue;
    Tensor<T> flat = ts::reshape(reg[l], {reg[l].size() / 2, 2});
    Tensor<T> d = diou_sum(flat, lv.positives);
    diou = diou.defined() ? ts::add(diou, d) : d;
  }
  LossBreakdown<T> r;
  r.num_positive = targets.num_positive;
  r.cls = static_cast<double>(focal.item()) / norm;
  r.reg = diou.defined() ? static_cast<double>(diou.item()) / norm : 0.0;
  Tensor<T> sum = ts::scale(focal, static_cast<T>(cfg.lambda));
  if (diou.defined()) sum = ts::add(sum, diou);
  r.total = ts::scale(sum, static_cast<T>(1.0 / norm));
  return r;
}

#define TEMPSEG_LOSS(T)                                                                    \
  template Tensor<T> focal_sum(const Tensor<T>&, const std::vector<std::uint8_t>&,         \
                               const std::vector<std::uint8_t>&, const LossConfig&);       \
  template Tensor<T> diou_sum(const Tensor<T>&, const std::vector<RegressionTarget>&);      \
  template LossBreakdown<T> total_loss(const std::vector<Tensor<T>>&,                      \
                                       const std::vector<Tensor<T>>&, const BatchTargets&, \
                                       const LossConfig&, double);

TEMPSEG_LOSS(float)
TEMPSEG_LOSS(double)

#undef TEMPSEG_LOSS

}  // namespace tempseg::loss
