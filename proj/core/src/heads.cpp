// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/heads.hpp"

#include <algorithm>
#include <cmath>

#include "tempseg/error.hpp"
#include "tempseg/ops.hpp"

namespace tempseg::heads {

namespace ts = tempseg::tensor;

namespace {

constexpr double kBoundaryTol = 1e-9;

template <class T>
ConvStack<T> register_stack(ts::ParameterSet<T>& set, const std::string& pre, std::size_t c,
                            std::size_t out) {
  auto zeros = [&](const std::string& name, ts::Shape shape) {
    const std::size_t n = ts::numel(shape);
    return set.add(pre + name, std::move(shape), std::vector<T>(n, T(0)));
  };
  ConvStack<T> s;
  s.w1 = zeros("conv1.weight", {c, c, 3});
  s.b1 = zeros("conv1.bias", {c});
  s.g1 = zeros("norm1.gamma", {c});
  s.beta1 = zeros("norm1.beta", {c});
  s.w2 = zeros("conv2.weight", {c, c, 3});
  s.b2 = zeros("conv2.bias", {c});
  s.g2 = zeros("norm2.gamma", {c});
  s.beta2 = zeros("norm2.beta", {c});
  s.w3 = zeros("conv3.weight", {out, c, 3});
  s.b3 = zeros("conv3.bias", {out});
  return s;
}

template <class T>
Tensor<T> run_stack(const Tensor<T>& x, const ts::Mask& mask, const ConvStack<T>& s) {
  Tensor<T> h = ts::conv1d(ts::masked_fill(x, mask, T(0)), s.w1, s.b1, 1, 1);
  h = ts::relu(ts::layer_norm(h, s.g1, s.beta1));
  h = ts::conv1d(ts::masked_fill(h, mask, T(0)), s.w2, s.b2, 1, 1);
  h = ts::relu(ts::layer_norm(h, s.g2, s.beta2));
  return ts::conv1d(ts::masked_fill(h, mask, T(0)), s.w3, s.b3, 1, 1);
}

}  // namespace

RegressionRanges RegressionRanges::defaults(std::size_t levels) {
  RegressionRanges r;
  double lo = 0.0, hi = 64.0;
  for (std::size_t l = 0; l < levels; ++l) {
    const bool last = l + 1 == levels;
    r.bounds.emplace_back(lo, last ? std::numeric_limits<double>::infinity() : hi);
    lo = hi;
    hi *= 2.0;
  }
  return r;
}

RegressionRanges RegressionRanges::from_boundaries(const std::vector<double>& interior,
                                                   std::size_t levels) {
  if (interior.empty()) return defaults(levels);
  if (interior.size() + 1 != levels) {
    throw InvalidArgument("regression ranges: " + std::to_string(interior.size()) +
                          " boundaries for " + std::to_string(levels) + " levels");
  }
  RegressionRanges r;
  double lo = 0.0;
  for (double b : interior) {
    r.bounds.emplace_back(lo, b);
    lo = b;
  }
  r.bounds.emplace_back(lo, std::numeric_limits<double>::infinity());
  r.validate();
  return r;
}

void RegressionRanges::validate() const {
  if (bounds.empty()) throw InvalidArgument("regression ranges: no levels");
  if (bounds.front().first != 0.0) throw InvalidArgument("regression ranges must start at 0");
  if (!std::isinf(bounds.back().second)) throw InvalidArgument("last regression range must be open");
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (!(bounds[i].second > bounds[i].first)) throw InvalidArgument("empty regression range");
    if (i + 1 < bounds.size() && bounds[i].second != bounds[i + 1].first) {
      throw InvalidArgument("regression ranges must be contiguous");
    }
  }
}

std::size_t RegressionRanges::level_for(double length) const {
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (length >= bounds[i].first && length < bounds[i].second) return i;
  }
  throw InvalidArgument("length outside regression ranges");
}

template <class T>
HeadParams<T> register_heads(ts::ParameterSet<T>& set, std::size_t channels) {
  HeadParams<T> p;
  p.cls = register_stack(set, "head.cls.", channels, 1);
  p.reg = register_stack(set, "head.reg.", channels, 2);
  return p;
}

template <class T>
std::vector<Tensor<T>> classify(const Pyramid<T>& pyramid, const HeadParams<T>& p) {
  std::vector<Tensor<T>> out;
  for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
    out.push_back(ts::sigmoid(run_stack(pyramid.levels[l], pyramid.masks[l], p.cls)));
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> regress(const Pyramid<T>& pyramid, const HeadParams<T>& p) {
  std::vector<Tensor<T>> out;
  for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
    out.push_back(ts::relu(run_stack(pyramid.levels[l], pyramid.masks[l], p.reg)));
  }
  return out;
}

std::optional<ScoredSegment> decode_span(const TimestepPrediction& pred,
                                         const std::vector<std::size_t>& strides,
                                         double feature_fps, double duration,
                                         DecodeStats* stats) {
  const double s = static_cast<double>(strides.at(pred.level));
  const double t = static_cast<double>(backbone::to_feature_index(pred.tau, strides[pred.level]));
  const double start = std::clamp((t - pred.d_s * s) / feature_fps, 0.0, duration);
  const double end = std::clamp((t + pred.d_e * s) / feature_fps, 0.0, duration);
  if (!(end > start)) {
    if (stats) ++stats->degenerate;
    return std::nullopt;
  }
  return ScoredSegment{start, end, pred.p};
}

std::vector<LevelTargets> assign_targets(const featio::SegmentSet& annotation,
                                         const std::vector<std::size_t>& lengths,
                                         const std::vector<std::size_t>& strides,
                                         double feature_fps, const RegressionRanges& ranges) {
  if (lengths.size() != strides.size() || ranges.bounds.size() != lengths.size()) {
    throw InvalidArgument("assign_targets: levels, strides and ranges disagree");
  }
  std::vector<LevelTargets> out(lengths.size());
  for (std::size_t l = 0; l < lengths.size(); ++l) {
    LevelTargets& lt = out[l];
    lt.length = lengths[l];
    lt.stride = strides[l];
    lt.labels.assign(lt.length, 0);
    lt.d_start.assign(lt.length, 0.0);
    lt.d_end.assign(lt.length, 0.0);
    lt.gt.assign(lt.length, featio::Segment{0.0, 0.0});
  }
  for (const auto& seg : annotation) {
    const double sf = seg.start * feature_fps;
    const double ef = seg.end * feature_fps;
    const std::size_t level = ranges.level_for(ef - sf);
    LevelTargets& lt = out[level];
    const double s = static_cast<double>(lt.stride);
    for (std::size_t tau = 0; tau < lt.length; ++tau) {
      const double t = static_cast<double>(backbone::to_feature_index(tau, lt.stride));
      if (t < sf - kBoundaryTol || t > ef + kBoundaryTol) continue;
      if (lt.labels[tau] && lt.gt[tau].length() <= seg.length()) continue;
      lt.labels[tau] = 1;
      lt.d_start[tau] = (t - sf) / s;
      lt.d_end[tau] = (ef - t) / s;
      lt.gt[tau] = seg;
    }
  }
  return out;
}

#define TEMPSEG_HEADS(T)                                                                   \
  template HeadParams<T> register_heads(ts::ParameterSet<T>&, std::size_t);                \
  template std::vector<Tensor<T>> classify(const Pyramid<T>&, const HeadParams<T>&);       \
  template std::vector<Tensor<T>> regress(const Pyramid<T>&, const HeadParams<T>&);

TEMPSEG_HEADS(float)
TEMPSEG_HEADS(double)

#undef TEMPSEG_HEADS

}  // namespace tempseg::heads
