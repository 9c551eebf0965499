// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/detector.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string_view>

#include "tempseg/checkpoint.hpp"
#include "tempseg/error.hpp"

namespace tempseg {

namespace ts = tempseg::tensor;

namespace {

constexpr double kEmbedBiasStd = 0.5;

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

double truncated_normal(std::mt19937_64& rng, double std) {
  std::normal_distribution<double> n(0.0, std);
  for (;;) {
    const double v = n(rng);
    if (std::abs(v) <= 2.0 * std) return v;
  }
}

/// Fills a [H, 4H] recurrent matrix with one orthogonal H x H block per gate.
template <class T>
void orthogonal_gates(std::span<T> dst, std::size_t h, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t g = 0; g < 4; ++g) {
    Eigen::MatrixXd a(h, h);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = n(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < h; ++j) dst[i * 4 * h + g * h + j] = static_cast<T>(q(i, j));
  }
}

}  // namespace

template <class T>
Batch<T> make_batch(const std::vector<const featio::FeatureSequence*>& seqs, std::size_t length) {
  if (seqs.empty()) throw InvalidArgument("make_batch: empty batch");
  const std::size_t dim = seqs.front()->dim;
  Batch<T> b;
  b.batch = seqs.size();
  b.length = length;
  std::vector<T> x(b.batch * length * dim, T(0));
  b.mask.assign(b.batch * length, 0);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = *seqs[i];
    if (s.dim != dim) {
      throw FormatError("dim mismatch in batch: " + s.id + " has " + std::to_string(s.dim) +
                        ", expected " + std::to_string(dim));
    }
    const std::size_t rows = std::min(s.valid_len, length);
    for (std::size_t t = 0; t < rows; ++t) {
      b.mask[i * length + t] = 1;
      for (std::size_t d = 0; d < dim; ++d) {
        x[(i * length + t) * dim + d] = static_cast<T>(s.frames[t * dim + d]);
      }
    }
  }
  b.x = ts::Tensor<T>::constant({b.batch, length, dim}, std::move(x));
  return b;
}

template <class T>
Detector<T>::Detector(const ModelConfig& config) : config_(config) {
  config_.validate();
  backbone_ = backbone::register_backbone(params_, config_);
  heads_ = heads::register_heads(params_, config_.model_dim);
}

template <class T>
void Detector<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const T prior_bias = static_cast<T>(-std::log((1.0 - kClassPrior) / kClassPrior));
  for (auto& [name, t] : params_.entries()) {
    auto v = ts::Tensor<T>(t).mutable_data();
    if (ends_with(name, ".gamma")) {
      std::fill(v.begin(), v.end(), T(1));
    } else if (name == "head.cls.conv3.bias") {
      std::fill(v.begin(), v.end(), prior_bias);
    } else if (name == "head.reg.conv3.bias") {
      std::fill(v.begin(), v.end(), static_cast<T>(kRegressionBiasInit));
    } else if (name == "embed.mdc.bias") {
      for (auto& x : v) x = static_cast<T>(truncated_normal(rng, kEmbedBiasStd));
    } else if (ends_with(name, ".beta") || ends_with(name, "bias")) {
      std::fill(v.begin(), v.end(), T(0));
    } else if (ends_with(name, "conv3.weight")) {
      std::fill(v.begin(), v.end(), T(0));
    } else if (ends_with(name, "lstm.w_hh")) {
      orthogonal_gates(v, t.dim(0), rng);
    } else if (starts_with(name, "downsample")) {
      // Each channel starts as a [1/4, 1/2, 1/4] smoothing filter.
      for (std::size_t c = 0; c < t.dim(0); ++c) {
        v[c * 3 + 0] = T(0.25);
        v[c * 3 + 1] = T(0.5);
        v[c * 3 + 2] = T(0.25);
      }
    } else {
      std::size_t fan_in = 1;
      for (std::size_t a = 1; a < t.rank(); ++a) fan_in *= t.dim(a);
      const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& x : v) x = static_cast<T>(truncated_normal(rng, std));
    }
  }
}

template <class T>
void Detector<T>::randomize(std::uint64_t seed, double std) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, std);
  for (auto& [name, t] : params_.entries()) {
    auto v = ts::Tensor<T>(t).mutable_data();
    for (auto& x : v) x = static_cast<T>(n(rng));
    if (ends_with(name, ".gamma")) {
      for (auto& x : v) x += T(1);
    }
  }
}

template <class T>
void Detector<T>::copy_values_from(const Detector& other) {
  if (!(other.config_ == config_)) throw InvalidArgument("copy_values_from: config mismatch");
  const auto& src = other.params_.entries();
  const auto& dst = params_.entries();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto d = ts::Tensor<T>(dst[i].second).mutable_data();
    const auto s = src[i].second.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

template <class T>
typename Detector<T>::Output Detector<T>::forward(const ts::Tensor<T>& x,
                                                  const ts::Mask& mask) const {
  Output out;
  out.pyramid = backbone::build_pyramid(x, mask, backbone_, config_);
  out.cls = heads::classify(out.pyramid, heads_);
  out.reg = heads::regress(out.pyramid, heads_);
  return out;
}

template <class T>
void Detector<T>::save(const std::filesystem::path& path) const {
  const auto arrays = params_.to_arrays();
  ts::write_checkpoint(path, arrays);
}

template <class T>
void Detector<T>::load(const std::filesystem::path& path) {
  params_.load_arrays(ts::read_checkpoint(path));
}

template Batch<float> make_batch(const std::vector<const featio::FeatureSequence*>&, std::size_t);
template Batch<double> make_batch(const std::vector<const featio::FeatureSequence*>&, std::size_t);
template class Detector<float>;
template class Detector<double>;

}  // namespace tempseg
