// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Feature projection, transformer/LSTM blocks with windowed attention, and the
// multi-scale feature pyramid.
//
// Pipeline for an input [B, M, input_dim] with position mask:
//   masked differential conv (k=3) + bias -> LayerNorm -> ReLU
//   blocks 1 .. N-L          : stride 1, refine only
//   block N-L+1              : level 1 (stride 1)
//   blocks N-L+2 .. N        : strided depthwise conv (k=3) then block;
//                              each output is the next pyramid level
// Every op that mixes time reads masked (zeroed) inputs, and every stage
// re-zeroes padded positions, so valid outputs never depend on pad contents.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tempseg/ops.hpp"
#include "tempseg/parameters.hpp"
#include "tempseg/tensor.hpp"

namespace tempseg::backbone {

using tensor::Mask;
using tensor::Tensor;

struct ModelConfig {
  std::size_t input_dim = 1024;
  std::size_t model_dim = 256;
  std::size_t n_blocks = 6;
  std::size_t n_levels = 5;
  std::size_t window_size = 9;  // full attention window, odd
  std::size_t n_heads = 4;
  double theta = 0.6;
  std::size_t downsample_stride = 2;
  std::size_t max_len = 1024;

  /// Throws InvalidArgument on a broken invariant.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct AttentionParams {
  Tensor<T> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
};

template <class T>
struct LstmParams {
  Tensor<T> w_ih, w_hh, bias;
};

template <class T>
struct BlockParams {
  Tensor<T> ln_in_g, ln_in_b;    // pre-norm shared by attention and LSTM
  AttentionParams<T> attn;
  Tensor<T> ln_attn_g, ln_attn_b;
  LstmParams<T> lstm;
  Tensor<T> w_fuse, b_fuse;      // [2C, C]
  Tensor<T> ln_fuse_g, ln_fuse_b;
  Tensor<T> ln_ffn_g, ln_ffn_b;
  Tensor<T> w_ffn1, b_ffn1, w_ffn2, b_ffn2;
};

template <class T>
struct BackboneParams {
  Tensor<T> mdc_w;  // [C, input_dim, 3]
  Tensor<T> mdc_b;  // [C]
  Tensor<T> ln_embed_g, ln_embed_b;
  std::vector<BlockParams<T>> blocks;
  std::vector<Tensor<T>> down_w, down_b;  // one per level after the first: [C, 3], [C]
};

/// Registers every backbone parameter on `set` (deterministic order) with
/// placeholder values; the detector applies initialization afterwards.
template <class T>
BackboneParams<T> register_backbone(tensor::ParameterSet<T>& set, const ModelConfig& config);

template <class T>
struct Pyramid {
  std::size_t batch = 0;
  std::vector<Tensor<T>> levels;    // [B, len_i, C]
  std::vector<Mask> masks;          // B * len_i entries
  std::vector<std::size_t> strides; // cumulative, level-0 grid units
  std::vector<std::size_t> lengths;
};

/// Masked differential convolution with offsets {-1, 0, +1}:
///   out(t) = theta * (-z(t) . sum_n w(n)) + sum_n w(n) . z(t + n)
/// per output channel. Padded positions are zeroed before and after.
template <class T>
Tensor<T> mdc_project(const Tensor<T>& z, const Mask& mask, const Tensor<T>& weight, T theta);

/// Multi-head self-attention restricted to a centered window of odd width.
/// Keys outside the window or at padded positions are excluded; a query with
/// no admissible key yields zeros.
template <class T>
Tensor<T> local_attention(const Tensor<T>& x, const Mask& mask, const AttentionParams<T>& p,
                          std::size_t heads, std::size_t window);

/// Forward LSTM over time. x [B, T, C]; returns hidden states [B, T, H] and
/// writes the final packed [h ; c] state to `final_state` when given.
/// `initial_state` defaults to zeros.
template <class T>
Tensor<T> lstm_sequence(const Tensor<T>& x, const LstmParams<T>& p,
                        const Tensor<T>& initial_state = {}, Tensor<T>* final_state = nullptr);

struct BlockOptions {
  std::size_t heads = 4;
  std::size_t window = 9;
};

/// One block:
///   u  = LN_in(x)
///   y1 = LN_attn(x + MSA_local(u))
///   h  = LSTM(u)
///   y2 = LN_fuse(y1 + W_fuse [y1 ; h] + b_fuse)
///   y  = y2 + FFN(LN_ffn(y2))
/// with padded positions zeroed on output.
template <class T>
Tensor<T> rtlm_block(const Tensor<T>& x, const Mask& mask, const BlockParams<T>& p,
                     const BlockOptions& opt, const Tensor<T>& initial_state = {},
                     Tensor<T>* final_state = nullptr);

/// Coarse position valid iff any fine position it covers is valid.
Mask downsample_mask(const Mask& fine, std::size_t batch, std::size_t fine_len, std::size_t stride);

/// Level lengths for an input of `len` frames: len, ceil(len/s), ...
std::vector<std::size_t> pyramid_lengths(std::size_t len, std::size_t levels, std::size_t stride);

/// Runs the full backbone. x [B, M, input_dim], mask B*M entries.
/// Throws InvalidArgument("insufficient length for L levels") when M < 2^(L-1).
template <class T>
Pyramid<T> build_pyramid(const Tensor<T>& x, const Mask& mask, const BackboneParams<T>& p,
                         const ModelConfig& config);

/// Level-0 grid index of position tau on a level with cumulative stride s:
/// floor(s/2) + tau * s.
std::size_t to_feature_index(std::size_t tau, std::size_t stride);

/// Same mapping converted to seconds.
double to_raw_timestamp(std::size_t level, std::size_t tau, const std::vector<std::size_t>& strides,
                        double feature_fps);

}  // namespace tempseg::backbone
