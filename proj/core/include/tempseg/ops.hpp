// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// The closed set of differentiable primitives used by the detector.
//
// Layout convention: sequences are [batch, time, channels], row-major.
// Broadcasting is limited to per-channel vectors over leading dimensions.
// Position masks are one byte per (batch, time) entry, nonzero = valid.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tempseg/tensor.hpp"

namespace tempseg::tensor {

using Mask = std::vector<std::uint8_t>;

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// x[..., C] + b[C]
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// x[..., K] @ w[K, N] -> [..., N]
template <class T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& w);

/// Dense 1D convolution (cross-correlation) over time.
/// x [B, T, Cin], w [Cout, Cin, K], bias [Cout] or undefined.
/// Output length floor((T + 2*pad - K) / stride) + 1, zero padding.
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad);

/// Depthwise variant: w [C, K], each channel convolved with its own kernel.
template <class T>
Tensor<T> depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& bias, std::size_t stride,
                           std::size_t pad);

/// Normalizes over the last axis, then applies gamma [C] and beta [C].
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5));

/// Softmax over the last axis. `additive_mask`, when non-empty, has x's size
/// and is added to the logits (use -inf to exclude). A row with no finite
/// logit yields all zeros.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::span<const T> additive_mask = {});

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <class T>
Tensor<T> relu(const Tensor<T>& x);
template <class T>
Tensor<T> tanh(const Tensor<T>& x);

/// One LSTM step with packed state [B, 2H] = [h ; c] and gate order (i, f, g, o).
/// x [B, I], w_ih [I, 4H], w_hh [H, 4H], bias [4H].
template <class T>
Tensor<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& state,
                    const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                    const Tensor<T>& bias);

/// x[:, t, :] of a [B, T, C] tensor.
template <class T>
Tensor<T> select_time(const Tensor<T>& x, std::size_t t);
/// Inverse of select_time over all t: steps are [B, C] each.
template <class T>
Tensor<T> stack_time(const std::vector<Tensor<T>>& steps);
/// x[..., begin:end]
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t end);
/// [a ; b] along the last axis; leading dims must agree.
template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b);

/// Banded multi-head dot products. q, k [B, T, C] with C divisible by heads.
/// Output [B, heads, T, window]: entry (b, h, t, j) is
/// <q[b,t,h-slice], k[b, t + j - window/2, h-slice]> * scale, and 0 where the
/// key index falls outside [0, T).
template <class T>
Tensor<T> band_scores(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads,
                      std::size_t window, T scale);

/// Banded weighted sum: out[b, t, h-slice] = sum_j attn[b,h,t,j] * v[b, t+j-window/2, h-slice].
template <class T>
Tensor<T> band_apply(const Tensor<T>& attn, const Tensor<T>& v);

/// Replaces every position (b, t) with mask == 0 by `value` across all
/// channels. x [B, T, ...], mask has B*T entries.
template <class T>
Tensor<T> masked_fill(const Tensor<T>& x, const Mask& mask, T value);

template <class T>
Tensor<T> sum(const Tensor<T>& x);
template <class T>
Tensor<T> mean(const Tensor<T>& x);
template <class T>
Tensor<T> max(const Tensor<T>& x);
/// Sum over the last axis: [..., K] -> [...].
template <class T>
Tensor<T> sum_last(const Tensor<T>& x);

}  // namespace tempseg::tensor
