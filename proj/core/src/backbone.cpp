// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/backbone.hpp"

#include <cmath>
#include <limits>

#include "tempseg/error.hpp"

namespace tempseg::backbone {

namespace ts = tempseg::tensor;

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("model config: " + msg); };
  if (input_dim == 0 || model_dim == 0) fail("input_dim and model_dim must be positive");
  if (n_blocks == 0 || n_levels == 0) fail("n_blocks and n_levels must be positive");
  if (n_levels > n_blocks) fail("n_levels must not exceed n_blocks");
  if (n_heads == 0 || model_dim % n_heads != 0) fail("model_dim must be divisible by n_heads");
  if (window_size % 2 == 0) fail("window_size must be odd");
  if (!(theta >= 0.0 && theta <= 1.0)) fail("theta must lie in [0, 1]");
  if (downsample_stride < 1) fail("downsample_stride must be >= 1");
  if (max_len == 0) fail("max_len must be positive");
}

namespace {

template <class T>
Tensor<T> placeholder(ts::ParameterSet<T>& set, const std::string& name, ts::Shape shape) {
  const std::size_t n = ts::numel(shape);
  return set.add(name, std::move(shape), std::vector<T>(n, T(0)));
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return ts::add_bias(ts::matmul(x, w), b);
}

}  // namespace

template <class T>
BackboneParams<T> register_backbone(ts::ParameterSet<T>& set, const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.model_dim;
  BackboneParams<T> p;
  p.mdc_w = placeholder(set, "embed.mdc.weight", {c, cfg.input_dim, 3});
  p.mdc_b = placeholder(set, "embed.mdc.bias", {c});
  p.ln_embed_g = placeholder(set, "embed.norm.gamma", {c});
  p.ln_embed_b = placeholder(set, "embed.norm.beta", {c});
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    const std::string pre = "block" + std::to_string(i) + ".";
    BlockParams<T> b;
    b.ln_in_g = placeholder(set, pre + "norm_in.gamma", {c});
    b.ln_in_b = placeholder(set, pre + "norm_in.beta", {c});
    b.attn.w_q = placeholder(set, pre + "attn.q.weight", {c, c});
    b.attn.b_q = placeholder(set, pre + "attn.q.bias", {c});
    b.attn.w_k = placeholder(set, pre + "attn.k.weight", {c, c});
    b.attn.b_k = placeholder(set, pre + "attn.k.bias", {c});
    b.attn.w_v = placeholder(set, pre + "attn.v.weight", {c, c});
    b.attn.b_v = placeholder(set, pre + "attn.v.bias", {c});
    b.attn.w_o = placeholder(set, pre + "attn.out.weight", {c, c});
    b.attn.b_o = placeholder(set, pre + "attn.out.bias", {c});
    b.ln_attn_g = placeholder(set, pre + "norm_attn.gamma", {c});
    b.ln_attn_b = placeholder(set, pre + "norm_attn.beta", {c});
    b.lstm.w_ih = placeholder(set, pre + "lstm.w_ih", {c, 4 * c});
    b.lstm.w_hh = placeholder(set, pre + "lstm.w_hh", {c, 4 * c});
    b.lstm.bias = placeholder(set, pre + "lstm.bias", {4 * c});
    b.w_fuse = placeholder(set, pre + "fuse.weight", {2 * c, c});
    b.b_fuse = placeholder(set, pre + "fuse.bias", {c});
    b.ln_fuse_g = placeholder(set, pre + "norm_fuse.gamma", {c});
    b.ln_fuse_b = placeholder(set, pre + "norm_fuse.beta", {c});
    b.ln_ffn_g = placeholder(set, pre + "norm_ffn.gamma", {c});
    b.ln_ffn_b = placeholder(set, pre + "norm_ffn.beta", {c});
    b.w_ffn1 = placeholder(set, pre + "ffn.fc1.weight", {c, 2 * c});
    b.b_ffn1 = placeholder(set, pre + "ffn.fc1.bias", {2 * c});
    b.w_ffn2 = placeholder(set, pre + "ffn.fc2.weight", {2 * c, c});
    b.b_ffn2 = placeholder(set, pre + "ffn.fc2.bias", {c});
    p.blocks.push_back(std::move(b));
  }
  for (std::size_t l = 1; l < cfg.n_levels; ++l) {
    const std::string pre = "downsample" + std::to_string(l) + ".";
    p.down_w.push_back(placeholder(set, pre + "weight", {c, 3}));
    p.down_b.push_back(placeholder(set, pre + "bias", {c}));
  }
  return p;
}

template <class T>
Tensor<T> mdc_project(const Tensor<T>& z, const Mask& mask, const Tensor<T>& weight, T theta) {
  if (z.rank() != 3 || weight.rank() != 3 || weight.dim(1) != z.dim(2) || weight.dim(2) != 3) {
    throw InvalidArgument("mdc_project: weight " + ts::shape_str(weight.shape()) +
                          " does not fit input " + ts::shape_str(z.shape()));
  }
  const Tensor<T> zm = ts::masked_fill(z, mask, T(0));
  const Tensor<T> spatial = ts::conv1d(zm, weight, Tensor<T>{}, 1, 1);
  // Kernel-summed weights applied at the center only: the theta term.
  const Tensor<T> wsum =
      ts::reshape(ts::sum_last(weight), {weight.dim(0), weight.dim(1), std::size_t{1}});
  const Tensor<T> center = ts::conv1d(zm, wsum, Tensor<T>{}, 1, 0);
  return ts::masked_fill(ts::sub(spatial, ts::scale(center, theta)), mask, T(0));
}

template <class T>
Tensor<T> local_attention(const Tensor<T>& x, const Mask& mask, const AttentionParams<T>& p,
                          std::size_t heads, std::size_t window) {
  if (window % 2 == 0) throw InvalidArgument("local_attention: window must be odd");
  const std::size_t nb = x.dim(0), len = x.dim(1), ch = x.dim(2);
  if (ch % heads != 0) throw InvalidArgument("local_attention: channels not divisible by heads");
  const Tensor<T> q = linear(x, p.w_q, p.b_q);
  const Tensor<T> k = linear(x, p.w_k, p.b_k);
  const Tensor<T> v = linear(x, p.w_v, p.b_v);
  const T scale = T(1) / std::sqrt(T(ch / heads));
  const Tensor<T> scores = ts::band_scores(q, k, heads, window, scale);

  const T neg_inf = -std::numeric_limits<T>::infinity();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<T> additive(scores.size(), T(0));
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < len; ++t) {
        T* row = additive.data() + ((b * heads + h) * len + t) * window;
        for (std::size_t j = 0; j < window; ++j) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - half;
          const bool ok = s >= 0 && s < static_cast<std::ptrdiff_t>(len) &&
                          mask[b * len + static_cast<std::size_t>(s)];
          if (!ok) row[j] = neg_inf;
        }
      }
  const Tensor<T> attn = ts::softmax(scores, std::span<const T>(additive));
  return linear(ts::band_apply(attn, v), p.w_o, p.b_o);
}

template <class T>
Tensor<T> lstm_sequence(const Tensor<T>& x, const LstmParams<T>& p, const Tensor<T>& initial_state,
                        Tensor<T>* final_state) {
  const std::size_t nb = x.dim(0), len = x.dim(1);
  const std::size_t hid = p.w_hh.dim(0);
  Tensor<T> state = initial_state.defined() ? initial_state : Tensor<T>::zeros({nb, 2 * hid});
  std::vector<Tensor<T>> states;
  states.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    state = ts::lstm_cell(ts::select_time(x, t), state, p.w_ih, p.w_hh, p.bias);
    states.push_back(state);
  }
  if (final_state) *final_state = state;
  return ts::slice_last(ts::stack_time(states), 0, hid);
}

template <class T>
Tensor<T> rtlm_block(const Tensor<T>& x, const Mask& mask, const BlockParams<T>& p,
                     const BlockOptions& opt, const Tensor<T>& initial_state,
                     Tensor<T>* final_state) {
  const Tensor<T> u = ts::layer_norm(x, p.ln_in_g, p.ln_in_b);
  const Tensor<T> attn = ts::masked_fill(local_attention(u, mask, p.attn, opt.heads, opt.window),
                                         mask, T(0));
  const Tensor<T> y1 = ts::layer_norm(ts::add(x, attn), p.ln_attn_g, p.ln_attn_b);
  const Tensor<T> h = lstm_sequence(u, p.lstm, initial_state, final_state);
  const Tensor<T> fused = linear(ts::concat_last(y1, h), p.w_fuse, p.b_fuse);
  const Tensor<T> y2 = ts::layer_norm(ts::add(y1, fused), p.ln_fuse_g, p.ln_fuse_b);
  const Tensor<T> ffn_in = ts::layer_norm(y2, p.ln_ffn_g, p.ln_ffn_b);
  const Tensor<T> ffn = linear(ts::relu(linear(ffn_in, p.w_ffn1, p.b_ffn1)), p.w_ffn2, p.b_ffn2);
  return ts::masked_fill(ts::add(y2, ffn), mask, T(0));
}

Mask downsample_mask(const Mask& fine, std::size_t batch, std::size_t fine_len, std::size_t stride) {
  if (fine.size() != batch * fine_len) throw InvalidArgument("downsample_mask: size mismatch");
  const std::size_t coarse_len = (fine_len + stride - 1) / stride;
  Mask out(batch * coarse_len, 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < coarse_len; ++t)
      for (std::size_t k = 0; k < stride && t * stride + k < fine_len; ++k)
        if (fine[b * fine_len + t * stride + k]) out[b * coarse_len + t] = 1;
  return out;
}

std::vector<std::size_t> pyramid_lengths(std::size_t len, std::size_t levels, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < levels; ++l) {
    out.push_back(len);
    len = (len + stride - 1) / stride;
  }
  return out;
}

template <class T>
Pyramid<T> build_pyramid(const Tensor<T>& x, const Mask& mask, const BackboneParams<T>& p,
                         const ModelConfig& cfg) {
  if (x.rank() != 3 || x.dim(2) != cfg.input_dim) {
    throw InvalidArgument("build_pyramid: input " + ts::shape_str(x.shape()) +
                          " does not match input_dim " + std::to_string(cfg.input_dim));
  }
  const std::size_t nb = x.dim(0);
  std::size_t len = x.dim(1);
  std::size_t needed = 1;
  for (std::size_t l = 1; l < cfg.n_levels; ++l) needed *= cfg.downsample_stride;
  if (len < needed) {
    throw InvalidArgument("insufficient length for L levels: " + std::to_string(len) + " < " +
                          std::to_string(needed));
  }

  // The bias breaks the scale invariance of LayerNorm over the projection, so
  // frame energy survives the embedding.
  Tensor<T> h = ts::add_bias(mdc_project(x, mask, p.mdc_w, static_cast<T>(cfg.theta)), p.mdc_b);
  h = ts::masked_fill(ts::relu(ts::layer_norm(h, p.ln_embed_g, p.ln_embed_b)), mask, T(0));

  Pyramid<T> pyr;
  pyr.batch = nb;
  Mask m = mask;
  std::size_t stride = 1;
  const BlockOptions opt{cfg.n_heads, cfg.window_size};
  const std::size_t first_tap = cfg.n_blocks - cfg.n_levels;
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    if (i > first_tap) {
      const std::size_t lvl = i - first_tap;  // 1-based index of the downsample
      h = ts::depthwise_conv1d(h, p.down_w[lvl - 1], p.down_b[lvl - 1], cfg.downsample_stride, 1);
      m = downsample_mask(m, nb, len, cfg.downsample_stride);
      len = h.dim(1);
      stride *= cfg.downsample_stride;
      h = ts::masked_fill(h, m, T(0));
    }
    h = rtlm_block(h, m, p.blocks[i], opt);
    if (i >= first_tap) {
      pyr.levels.push_back(h);
      pyr.masks.push_back(m);
      pyr.strides.push_back(stride);
      pyr.lengths.push_back(len);
    }
  }
  return pyr;
}

std::size_t to_feature_index(std::size_t tau, std::size_t stride) {
  return stride / 2 + tau * stride;
}

double to_raw_timestamp(std::size_t level, std::size_t tau, const std::vector<std::size_t>& strides,
                        double feature_fps) {
  return static_cast<double>(to_feature_index(tau, strides.at(level))) / feature_fps;
}

#define TEMPSEG_BACKBONE(T)                                                                     \
  template BackboneParams<T> register_backbone(ts::ParameterSet<T>&, const ModelConfig&);       \
  template Tensor<T> mdc_project(const Tensor<T>&, const Mask&, const Tensor<T>&, T);           \
  template Tensor<T> local_attention(const Tensor<T>&, const Mask&, const AttentionParams<T>&, \
                                     std::size_t, std::size_t);                                 \
  template Tensor<T> lstm_sequence(const Tensor<T>&, const LstmParams<T>&, const Tensor<T>&,    \
                                   Tensor<T>*);                                                 \
  template Tensor<T> rtlm_block(const Tensor<T>&, const Mask&, const BlockParams<T>&,           \
                                const BlockOptions&, const Tensor<T>&, Tensor<T>*);             \
  template Pyramid<T> build_pyramid(const Tensor<T>&, const Mask&, const BackboneParams<T>&,    \
                                    const ModelConfig&);

TEMPSEG_BACKBONE(float)
TEMPSEG_BACKBONE(double)

#undef TEMPSEG_BACKBONE

}  // namespace tempseg::backbone
