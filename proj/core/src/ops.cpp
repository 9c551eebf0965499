// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tempseg/error.hpp"

namespace tempseg::tensor {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

template <class T>
std::size_t last_dim(const Tensor<T>& x) {
  require(x.rank() >= 1, "rank-0 tensor");
  return x.shape().back();
}

template <class T>
T sigmoid_scalar(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

// --- Shape and elementwise ------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape: " + shape_str(x.shape()) + " -> " +
                                        shape_str(shape));
  std::vector<T> v(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(v), "reshape", {&x},
                        [x](const Node<T>& out) {
                          auto gx = grad_buffer(x);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i];
                        });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> v(a.size());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ad[i] + bd[i];
  return make_result<T>(a.shape(), std::move(v), "add", {&a, &b},
                        [a, b](const Node<T>& out) {
                          for (const Tensor<T>* in : {&a, &b}) {
                            if (!in->requires_grad()) continue;
                            auto g = grad_buffer(*in);
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
                          }
                        });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> v(a.size());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ad[i] - bd[i];
  return make_result<T>(a.shape(), std::move(v), "sub", {&a, &b},
                        [a, b](const Node<T>& out) {
                          if (a.requires_grad()) {
                            auto g = grad_buffer(a);
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
                          }
                          if (b.requires_grad()) {
                            auto g = grad_buffer(b);
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= out.grad[i];
                          }
                        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> v(a.size());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ad[i] * bd[i];
  return make_result<T>(a.shape(), std::move(v), "mul", {&a, &b},
                        [a, b](const Node<T>& out) {
                          if (a.requires_grad()) {
                            auto g = grad_buffer(a);
                            auto bd = b.data();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * bd[i];
                          }
                          if (b.requires_grad()) {
                            auto g = grad_buffer(b);
                            auto ad = a.data();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * ad[i];
                          }
                        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> v(x.data().begin(), x.data().end());
  for (auto& e : v) e *= factor;
  return make_result<T>(x.shape(), std::move(v), "scale", {&x},
                        [x, factor](const Node<T>& out) {
                          auto g = grad_buffer(x);
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * factor;
                        });
}

template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t c = last_dim(x);
  require(bias.rank() == 1 && bias.dim(0) == c,
          "add_bias: bias " + shape_str(bias.shape()) + " for input " + shape_str(x.shape()));
  std::vector<T> v(x.data().begin(), x.data().end());
  auto bd = bias.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bd[i % c];
  return make_result<T>(x.shape(), std::move(v), "add_bias", {&x, &bias},
                        [x, bias, c](const Node<T>& out) {
                          if (x.requires_grad()) {
                            auto g = grad_buffer(x);
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
                          }
                          if (bias.requires_grad()) {
                            auto g = grad_buffer(bias);
                            for (std::size_t i = 0; i < out.grad.size(); ++i) g[i % c] += out.grad[i];
                          }
                        });
}

// --- Linear algebra -----------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& w) {
  require(w.rank() == 2, "matmul: weight must be rank 2, got " + shape_str(w.shape()));
  const std::size_t k = last_dim(x);
  require(w.dim(0) == k, "matmul: inner dims " + shape_str(x.shape()) + " @ " +
                             shape_str(w.shape()));
  const std::size_t n = w.dim(1);
  const std::size_t rows = x.size() / k;
  Shape shape = x.shape();
  shape.back() = n;
  std::vector<T> v(rows * n);
  MapR<T>(v.data(), rows, n).noalias() =
      CMapR<T>(x.data().data(), rows, k) * CMapR<T>(w.data().data(), k, n);
  return make_result<T>(std::move(shape), std::move(v), "matmul", {&x, &w},
                        [x, w, rows, k, n](const Node<T>& out) {
                          CMapR<T> g(out.grad.data(), rows, n);
                          if (x.requires_grad()) {
                            MapR<T>(grad_buffer(x).data(), rows, k).noalias() +=
                                g * CMapR<T>(w.data().data(), k, n).transpose();
                          }
                          if (w.requires_grad()) {
                            MapR<T>(grad_buffer(w).data(), k, n).noalias() +=
                                CMapR<T>(x.data().data(), rows, k).transpose() * g;
                          }
                        });
}

// --- Convolutions -------------------------------------------------------------

template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
  require(stride >= 1, "conv1d: stride must be >= 1");
  require(x.rank() == 3, "conv1d: input must be [B, T, C], got " + shape_str(x.shape()));
  require(w.rank() == 3, "conv1d: weight must be [Cout, Cin, K], got " + shape_str(w.shape()));
  const std::size_t nb = x.dim(0), len = x.dim(1), cin = x.dim(2);
  const std::size_t cout = w.dim(0), kw = w.dim(2);
  require(w.dim(1) == cin, "conv1d: weight expects " + std::to_string(w.dim(1)) +
                               " input channels, input has " + std::to_string(cin));
  require(len + 2 * pad >= kw, "conv1d: kernel longer than padded input");
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == cout, "conv1d: bias shape");
  }
  const std::size_t out_len = (len + 2 * pad - kw) / stride + 1;
  const std::size_t cols = kw * cin;

  // im2col: col[(b, t), k*Cin + ci] = x[b, t*stride + k - pad, ci]
  auto col = std::make_shared<std::vector<T>>(nb * out_len * cols, T(0));
  auto xd = x.data();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      T* row = col->data() + (b * out_len + t) * cols;
      for (std::size_t k = 0; k < kw; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) -
                                   static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const T* in = xd.data() + (b * len + static_cast<std::size_t>(src)) * cin;
        std::copy(in, in + cin, row + k * cin);
      }
    }
  }
  // w2[k*Cin + ci, co] = w[co, ci, k]
  auto w2 = std::make_shared<std::vector<T>>(cols * cout);
  auto wd = w.data();
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t k = 0; k < kw; ++k)
        (*w2)[(k * cin + ci) * cout + co] = wd[(co * cin + ci) * kw + k];

  const std::size_t rows = nb * out_len;
  std::vector<T> v(rows * cout);
  MapR<T> out(v.data(), rows, cout);
  out.noalias() = CMapR<T>(col->data(), rows, cols) * CMapR<T>(w2->data(), cols, cout);
  if (bias.defined()) {
    auto bd = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t co = 0; co < cout; ++co) v[r * cout + co] += bd[co];
  }

  return make_result<T>(
      {nb, out_len, cout}, std::move(v), "conv1d", {&x, &w, &bias},
      [x, w, bias, col, w2, nb, len, cin, cout, kw, stride, pad, out_len, rows,
       cols](const Node<T>& node) {
        CMapR<T> g(node.grad.data(), rows, cout);
        if (w.requires_grad()) {
          MatR<T> gw2 = CMapR<T>(col->data(), rows, cols).transpose() * g;
          auto gw = grad_buffer(w);
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ci = 0; ci < cin; ++ci)
              for (std::size_t k = 0; k < kw; ++k)
                gw[(co * cin + ci) * kw + k] += gw2(k * cin + ci, co);
        }
        if (bias.defined() && bias.requires_grad()) {
          auto gb = grad_buffer(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t co = 0; co < cout; ++co) gb[co] += node.grad[r * cout + co];
        }
        if (x.requires_grad()) {
          MatR<T> gcol = g * CMapR<T>(w2->data(), cols, cout).transpose();
          auto gx = grad_buffer(x);
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t t = 0; t < out_len; ++t) {
              const T* row = gcol.data() + (b * out_len + t) * cols;
              for (std::size_t k = 0; k < kw; ++k) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) -
                                           static_cast<std::ptrdiff_t>(pad);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                T* dst = gx.data() + (b * len + static_cast<std::size_t>(src)) * cin;
                for (std::size_t ci = 0; ci < cin; ++ci) dst[ci] += row[k * cin + ci];
              }
            }
          }
        }
      });
}

template <class T>
Tensor<T> depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           std::size_t stride, std::size_t pad) {
  require(stride >= 1, "depthwise_conv1d: stride must be >= 1");
  require(x.rank() == 3, "depthwise_conv1d: input must be [B, T, C], got " +
                             shape_str(x.shape()));
  const std::size_t nb = x.dim(0), len = x.dim(1), ch = x.dim(2);
  require(w.rank() == 2 && w.dim(0) == ch,
          "depthwise_conv1d: weight must be [C, K], got " + shape_str(w.shape()));
  const std::size_t kw = w.dim(1);
  require(len + 2 * pad >= kw, "depthwise_conv1d: kernel longer than padded input");
  if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == ch, "depthwise_conv1d: bias");
  const std::size_t out_len = (len + 2 * pad - kw) / stride + 1;

  auto src_index = [=](std::size_t t, std::size_t k) -> std::ptrdiff_t {
    return static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad);
  };

  std::vector<T> v(nb * out_len * ch, T(0));
  auto xd = x.data();
  auto wd = w.data();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      T* o = v.data() + (b * out_len + t) * ch;
      if (bias.defined()) {
        auto bd = bias.data();
        for (std::size_t c = 0; c < ch; ++c) o[c] = bd[c];
      }
      for (std::size_t k = 0; k < kw; ++k) {
        const auto s = src_index(t, k);
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
        const T* in = xd.data() + (b * len + static_cast<std::size_t>(s)) * ch;
        for (std::size_t c = 0; c < ch; ++c) o[c] += wd[c * kw + k] * in[c];
      }
    }
  }
  return make_result<T>(
      {nb, out_len, ch}, std::move(v), "depthwise_conv1d", {&x, &w, &bias},
      [x, w, bias, nb, len, ch, kw, out_len, src_index](const Node<T>& node) {
        auto xd = x.data();
        auto wd = w.data();
        std::span<T> gx, gw, gb;
        if (x.requires_grad()) gx = grad_buffer(x);
        if (w.requires_grad()) gw = grad_buffer(w);
        if (bias.defined() && bias.requires_grad()) gb = grad_buffer(bias);
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t t = 0; t < out_len; ++t) {
            const T* g = node.grad.data() + (b * out_len + t) * ch;
            if (!gb.empty())
              for (std::size_t c = 0; c < ch; ++c) gb[c] += g[c];
            for (std::size_t k = 0; k < kw; ++k) {
              const auto s = src_index(t, k);
              if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
              const std::size_t off = (b * len + static_cast<std::size_t>(s)) * ch;
              for (std::size_t c = 0; c < ch; ++c) {
                if (!gx.empty()) gx[off + c] += wd[c * kw + k] * g[c];
                if (!gw.empty()) gw[c * kw + k] += xd[off + c] * g[c];
              }
            }
          }
        }
      });
}

// --- Normalization and activations ------------------------------------------------

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps) {
  const std::size_t c = last_dim(x);
  require(gamma.rank() == 1 && gamma.dim(0) == c && beta.rank() == 1 && beta.dim(0) == c,
          "layer_norm: affine parameters must be [" + std::to_string(c) + "]");
  const std::size_t rows = x.size() / c;
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> v(x.size());
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xd.data() + r * c;
    T mu = 0;
    for (std::size_t i = 0; i < c; ++i) mu += in[i];
    mu /= T(c);
    T var = 0;
    for (std::size_t i = 0; i < c; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= T(c);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t i = 0; i < c; ++i) {
      const T h = (in[i] - mu) * rs;
      (*xhat)[r * c + i] = h;
      v[r * c + i] = h * gd[i] + bd[i];
    }
  }
  return make_result<T>(
      x.shape(), std::move(v), "layer_norm", {&x, &gamma, &beta},
      [x, gamma, beta, xhat, rstd, rows, c](const Node<T>& out) {
        auto gd = gamma.data();
        std::span<T> gg, gbeta, gx;
        if (gamma.requires_grad()) gg = grad_buffer(gamma);
        if (beta.requires_grad()) gbeta = grad_buffer(beta);
        if (x.requires_grad()) gx = grad_buffer(x);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* g = out.grad.data() + r * c;
          const T* h = xhat->data() + r * c;
          T mean_dh = 0, mean_dh_h = 0;
          for (std::size_t i = 0; i < c; ++i) {
            if (!gg.empty()) gg[i] += g[i] * h[i];
            if (!gbeta.empty()) gbeta[i] += g[i];
            const T dh = g[i] * gd[i];
            mean_dh += dh;
            mean_dh_h += dh * h[i];
          }
          if (gx.empty()) continue;
          mean_dh /= T(c);
          mean_dh_h /= T(c);
          const T rs = (*rstd)[r];
          for (std::size_t i = 0; i < c; ++i) {
            gx[r * c + i] += rs * (g[i] * gd[i] - mean_dh - h[i] * mean_dh_h);
          }
        }
      });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::span<const T> additive_mask) {
  const std::size_t w = last_dim(x);
  require(additive_mask.empty() || additive_mask.size() == x.size(),
          "softmax: mask size must match input");
  const std::size_t rows = x.size() / w;
  std::vector<T> v(x.size());
  auto xd = x.data();
  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = v.data() + r * w;
    T mx = neg_inf;
    for (std::size_t j = 0; j < w; ++j) {
      T l = xd[r * w + j];
      if (!additive_mask.empty()) l += additive_mask[r * w + j];
      o[j] = l;
      mx = std::max(mx, l);
    }
    if (mx == neg_inf) {
      std::fill(o, o + w, T(0));
      continue;
    }
    T total = 0;
    for (std::size_t j = 0; j < w; ++j) {
      o[j] = std::exp(o[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < w; ++j) o[j] /= total;
  }
  return make_result<T>(x.shape(), std::move(v), "softmax", {&x},
                        [x, rows, w](const Node<T>& out) {
                          auto gx = grad_buffer(x);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* y = out.value.data() + r * w;
                            const T* g = out.grad.data() + r * w;
                            T dot = 0;
                            for (std::size_t j = 0; j < w; ++j) dot += g[j] * y[j];
                            for (std::size_t j = 0; j < w; ++j) gx[r * w + j] += y[j] * (g[j] - dot);
                          }
                        });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> v(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sigmoid_scalar(xd[i]);
  return make_result<T>(x.shape(), std::move(v), "sigmoid", {&x}, [x](const Node<T>& out) {
    auto gx = grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T y = out.value[i];
      gx[i] += out.grad[i] * y * (T(1) - y);
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> v(x.size());
  auto xd = x.data();
  const bool track = kink_monitor().enabled;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = xd[i] > T(0) ? xd[i] : T(0);
    if (track) {
      note_branch(xd[i] > T(0));
      if (std::abs(xd[i]) < T(1e-6)) note_near_kink();
    }
  }
  return make_result<T>(x.shape(), std::move(v), "relu", {&x}, [x](const Node<T>& out) {
    auto gx = grad_buffer(x);
    auto xd = x.data();
    // Subgradient 0 at exactly 0.
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xd[i] > T(0)) gx[i] += out.grad[i];
  });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  std::vector<T> v(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(xd[i]);
  return make_result<T>(x.shape(), std::move(v), "tanh", {&x}, [x](const Node<T>& out) {
    auto gx = grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T y = out.value[i];
      gx[i] += out.grad[i] * (T(1) - y * y);
    }
  });
}

// --- Recurrent --------------------------------------------------------------------

template <class T>
Tensor<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& state, const Tensor<T>& w_ih,
                    const Tensor<T>& w_hh, const Tensor<T>& bias) {
  require(x.rank() == 2 && state.rank() == 2, "lstm_cell: x and state must be rank 2");
  const std::size_t nb = x.dim(0), in = x.dim(1);
  require(state.dim(0) == nb && state.dim(1) % 2 == 0, "lstm_cell: state must be [B, 2H]");
  const std::size_t hid = state.dim(1) / 2;
  require(w_ih.rank() == 2 && w_ih.dim(0) == in && w_ih.dim(1) == 4 * hid,
          "lstm_cell: w_ih must be [I, 4H], got " + shape_str(w_ih.shape()));
  require(w_hh.rank() == 2 && w_hh.dim(0) == hid && w_hh.dim(1) == 4 * hid,
          "lstm_cell: w_hh must be [H, 4H], got " + shape_str(w_hh.shape()));
  require(bias.rank() == 1 && bias.dim(0) == 4 * hid, "lstm_cell: bias must be [4H]");

  // Previous h and c as contiguous blocks.
  MatR<T> h_prev(nb, hid), c_prev(nb, hid);
  auto sd = state.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t j = 0; j < hid; ++j) {
      h_prev(b, j) = sd[b * 2 * hid + j];
      c_prev(b, j) = sd[b * 2 * hid + hid + j];
    }

  // Activated gates, saved for backward: [B, 4H] as (i, f, g, o).
  auto gates = std::make_shared<MatR<T>>(nb, 4 * hid);
  gates->noalias() = CMapR<T>(x.data().data(), nb, in) * CMapR<T>(w_ih.data().data(), in, 4 * hid);
  gates->noalias() += h_prev * CMapR<T>(w_hh.data().data(), hid, 4 * hid);
  auto bd = bias.data();
  auto tanh_c = std::make_shared<MatR<T>>(nb, hid);
  std::vector<T> v(nb * 2 * hid);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t j = 0; j < 4 * hid; ++j) {
      const T z = (*gates)(b, j) + bd[j];
      (*gates)(b, j) = (j >= 2 * hid && j < 3 * hid) ? std::tanh(z) : sigmoid_scalar(z);
    }
    for (std::size_t j = 0; j < hid; ++j) {
      const T i = (*gates)(b, j), f = (*gates)(b, hid + j), g = (*gates)(b, 2 * hid + j),
              o = (*gates)(b, 3 * hid + j);
      const T c = f * c_prev(b, j) + i * g;
      const T tc = std::tanh(c);
      (*tanh_c)(b, j) = tc;
      v[b * 2 * hid + j] = o * tc;
      v[b * 2 * hid + hid + j] = c;
    }
  }

  return make_result<T>(
      {nb, 2 * hid}, std::move(v), "lstm_cell", {&x, &state, &w_ih, &w_hh, &bias},
      [x, state, w_ih, w_hh, bias, gates, tanh_c, nb, in, hid](const Node<T>& out) {
        auto sd = state.data();
        // Gradient w.r.t. gate pre-activations.
        MatR<T> dz(nb, 4 * hid);
        MatR<T> dc_prev(nb, hid);
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t j = 0; j < hid; ++j) {
            const T i = (*gates)(b, j), f = (*gates)(b, hid + j), g = (*gates)(b, 2 * hid + j),
                    o = (*gates)(b, 3 * hid + j);
            const T tc = (*tanh_c)(b, j);
            const T dh = out.grad[b * 2 * hid + j];
            const T dc = out.grad[b * 2 * hid + hid + j] + dh * o * (T(1) - tc * tc);
            const T cp = sd[b * 2 * hid + hid + j];
            dz(b, j) = dc * g * i * (T(1) - i);
            dz(b, hid + j) = dc * cp * f * (T(1) - f);
            dz(b, 2 * hid + j) = dc * i * (T(1) - g * g);
            dz(b, 3 * hid + j) = dh * tc * o * (T(1) - o);
            dc_prev(b, j) = dc * f;
          }
        }
        if (bias.requires_grad()) {
          auto gb = grad_buffer(bias);
          for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t j = 0; j < 4 * hid; ++j) gb[j] += dz(b, j);
        }
        if (w_ih.requires_grad()) {
          MapR<T>(grad_buffer(w_ih).data(), in, 4 * hid).noalias() +=
              CMapR<T>(x.data().data(), nb, in).transpose() * dz;
        }
        if (x.requires_grad()) {
          MapR<T>(grad_buffer(x).data(), nb, in).noalias() +=
              dz * CMapR<T>(w_ih.data().data(), in, 4 * hid).transpose();
        }
        const bool need_state = state.requires_grad();
        if (w_hh.requires_grad() || need_state) {
          MatR<T> h_prev(nb, hid);
          for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t j = 0; j < hid; ++j) h_prev(b, j) = sd[b * 2 * hid + j];
          if (w_hh.requires_grad()) {
            MapR<T>(grad_buffer(w_hh).data(), hid, 4 * hid).noalias() += h_prev.transpose() * dz;
          }
          if (need_state) {
            MatR<T> dh_prev = dz * CMapR<T>(w_hh.data().data(), hid, 4 * hid).transpose();
            auto gs = grad_buffer(state);
            for (std::size_t b = 0; b < nb; ++b)
              for (std::size_t j = 0; j < hid; ++j) {
                gs[b * 2 * hid + j] += dh_prev(b, j);
                gs[b * 2 * hid + hid + j] += dc_prev(b, j);
              }
          }
        }
      });
}

// --- Gather / slice ---------------------------------------------------------------

template <class T>
Tensor<T> select_time(const Tensor<T>& x, std::size_t t) {
  require(x.rank() == 3, "select_time: input must be [B, T, C]");
  const std::size_t nb = x.dim(0), len = x.dim(1), ch = x.dim(2);
  require(t < len, "select_time: index out of range");
  std::vector<T> v(nb * ch);
  auto xd = x.data();
  for (std::size_t b = 0; b < nb; ++b)
    std::copy_n(xd.data() + (b * len + t) * ch, ch, v.data() + b * ch);
  return make_result<T>({nb, ch}, std::move(v), "select_time", {&x},
                        [x, t, nb, len, ch](const Node<T>& out) {
                          auto gx = grad_buffer(x);
                          for (std::size_t b = 0; b < nb; ++b)
                            for (std::size_t c = 0; c < ch; ++c)
                              gx[(b * len + t) * ch + c] += out.grad[b * ch + c];
                        });
}

template <class T>
Tensor<T> stack_time(const std::vector<Tensor<T>>& steps) {
  require(!steps.empty(), "stack_time: no steps");
  const std::size_t nb = steps[0].dim(0), ch = steps[0].dim(1), len = steps.size();
  std::vector<T> v(nb * len * ch);
  for (std::size_t t = 0; t < len; ++t) {
    require(steps[t].rank() == 2 && steps[t].dim(0) == nb && steps[t].dim(1) == ch,
            "stack_time: inconsistent step shapes");
    auto sd = steps[t].data();
    for (std::size_t b = 0; b < nb; ++b)
      std::copy_n(sd.data() + b * ch, ch, v.data() + (b * len + t) * ch);
  }
  // make_result takes a fixed input list; gradient need is decided here.
  bool needs = false;
  for (const auto& s : steps) needs = needs || s.requires_grad();
  Tensor<T> any_input = steps[0];
  for (const auto& s : steps)
    if (s.requires_grad()) any_input = s;
  return make_result<T>({nb, len, ch}, std::move(v), "stack_time", {needs ? &any_input : nullptr},
                        [steps, nb, len, ch](const Node<T>& out) {
                          for (std::size_t t = 0; t < len; ++t) {
                            if (!steps[t].requires_grad()) continue;
                            auto g = grad_buffer(steps[t]);
                            for (std::size_t b = 0; b < nb; ++b)
                              for (std::size_t c = 0; c < ch; ++c)
                                g[b * ch + c] += out.grad[(b * len + t) * ch + c];
                          }
                        });
}

template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t c = last_dim(x);
  require(begin < end && end <= c, "slice_last: bad range");
  const std::size_t rows = x.size() / c, w = end - begin;
  Shape shape = x.shape();
  shape.back() = w;
  std::vector<T> v(rows * w);
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xd.data() + r * c + begin, w, v.data() + r * w);
  return make_result<T>(std::move(shape), std::move(v), "slice_last", {&x},
                        [x, rows, c, w, begin](const Node<T>& out) {
                          auto gx = grad_buffer(x);
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < w; ++j)
                              gx[r * c + begin + j] += out.grad[r * w + j];
                        });
}

template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == b.rank(), "concat_last: rank mismatch");
  for (std::size_t i = 0; i + 1 < a.rank(); ++i)
    require(a.dim(i) == b.dim(i), "concat_last: leading dims differ");
  const std::size_t ca = last_dim(a), cb = last_dim(b), rows = a.size() / ca;
  Shape shape = a.shape();
  shape.back() = ca + cb;
  std::vector<T> v(rows * (ca + cb));
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ad.data() + r * ca, ca, v.data() + r * (ca + cb));
    std::copy_n(bd.data() + r * cb, cb, v.data() + r * (ca + cb) + ca);
  }
  return make_result<T>(std::move(shape), std::move(v), "concat_last", {&a, &b},
                        [a, b, rows, ca, cb](const Node<T>& out) {
                          if (a.requires_grad()) {
                            auto g = grad_buffer(a);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < ca; ++j)
                                g[r * ca + j] += out.grad[r * (ca + cb) + j];
                          }
                          if (b.requires_grad()) {
                            auto g = grad_buffer(b);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < cb; ++j)
                                g[r * cb + j] += out.grad[r * (ca + cb) + ca + j];
                          }
                        });
}

// --- Banded attention ---------------------------------------------------------------

template <class T>
Tensor<T> band_scores(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads,
                      std::size_t window, T scale_factor) {
  require(q.rank() == 3, "band_scores: q must be [B, T, C]");
  require_same_shape(q, k, "band_scores");
  require(heads >= 1 && q.dim(2) % heads == 0, "band_scores: channels not divisible by heads");
  require(window % 2 == 1, "band_scores: window must be odd");
  const std::size_t nb = q.dim(0), len = q.dim(1), ch = q.dim(2), dh = ch / heads;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<T> v(nb * heads * len * window, T(0));
  auto qd = q.data();
  auto kd = k.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < len; ++t) {
        const T* qr = qd.data() + (b * len + t) * ch + h * dh;
        T* o = v.data() + ((b * heads + h) * len + t) * window;
        for (std::size_t j = 0; j < window; ++j) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - half;
          if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
          const T* kr = kd.data() + (b * len + static_cast<std::size_t>(s)) * ch + h * dh;
          T acc = 0;
          for (std::size_t d = 0; d < dh; ++d) acc += qr[d] * kr[d];
          o[j] = acc * scale_factor;
        }
      }
  return make_result<T>(
      {nb, heads, len, window}, std::move(v), "band_scores", {&q, &k},
      [q, k, nb, heads, len, ch, dh, window, half, scale_factor](const Node<T>& out) {
        auto qd = q.data();
        auto kd = k.data();
        std::span<T> gq, gk;
        if (q.requires_grad()) gq = grad_buffer(q);
        if (k.requires_grad()) gk = grad_buffer(k);
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t t = 0; t < len; ++t) {
              const std::size_t qo = (b * len + t) * ch + h * dh;
              const T* g = out.grad.data() + ((b * heads + h) * len + t) * window;
              for (std::size_t j = 0; j < window; ++j) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - half;
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
                const std::size_t ko = (b * len + static_cast<std::size_t>(s)) * ch + h * dh;
                const T gs = g[j] * scale_factor;
                for (std::size_t d = 0; d < dh; ++d) {
                  if (!gq.empty()) gq[qo + d] += gs * kd[ko + d];
                  if (!gk.empty()) gk[ko + d] += gs * qd[qo + d];
                }
              }
            }
      });
}

template <class T>
Tensor<T> band_apply(const Tensor<T>& attn, const Tensor<T>& v) {
  require(attn.rank() == 4, "band_apply: attention must be [B, H, T, W]");
  require(v.rank() == 3, "band_apply: values must be [B, T, C]");
  const std::size_t nb = attn.dim(0), heads = attn.dim(1), len = attn.dim(2),
                    window = attn.dim(3), ch = v.dim(2);
  require(v.dim(0) == nb && v.dim(1) == len && ch % heads == 0, "band_apply: shape mismatch");
  const std::size_t dh = ch / heads;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<T> out(nb * len * ch, T(0));
  auto ad = attn.data();
  auto vd = v.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < len; ++t) {
        const T* a = ad.data() + ((b * heads + h) * len + t) * window;
        T* o = out.data() + (b * len + t) * ch + h * dh;
        for (std::size_t j = 0; j < window; ++j) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - half;
          if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
          const T* vr = vd.data() + (b * len + static_cast<std::size_t>(s)) * ch + h * dh;
          for (std::size_t d = 0; d < dh; ++d) o[d] += a[j] * vr[d];
        }
      }
  return make_result<T>(
      {nb, len, ch}, std::move(out), "band_apply", {&attn, &v},
      [attn, v, nb, heads, len, window, ch, dh, half](const Node<T>& node) {
        auto ad = attn.data();
        auto vd = v.data();
        std::span<T> ga, gv;
        if (attn.requires_grad()) ga = grad_buffer(attn);
        if (v.requires_grad()) gv = grad_buffer(v);
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t t = 0; t < len; ++t) {
              const std::size_t ao = ((b * heads + h) * len + t) * window;
              const T* g = node.grad.data() + (b * len + t) * ch + h * dh;
              for (std::size_t j = 0; j < window; ++j) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - half;
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
                const std::size_t vo = (b * len + static_cast<std::size_t>(s)) * ch + h * dh;
                T acc = 0;
                for (std::size_t d = 0; d < dh; ++d) {
                  acc += g[d] * vd[vo + d];
                  if (!gv.empty()) gv[vo + d] += ad[ao + j] * g[d];
                }
                if (!ga.empty()) ga[ao + j] += acc;
              }
            }
      });
}

// --- Masking and reductions ------------------------------------------------------------

template <class T>
Tensor<T> masked_fill(const Tensor<T>& x, const Mask& mask, T value) {
  require(x.rank() >= 2, "masked_fill: input must be [B, T, ...]");
  const std::size_t positions = x.dim(0) * x.dim(1);
  require(mask.size() == positions, "masked_fill: mask has " + std::to_string(mask.size()) +
                                        " entries, expected " + std::to_string(positions));
  const std::size_t inner = x.size() / positions;
  std::vector<T> v(x.data().begin(), x.data().end());
  for (std::size_t p = 0; p < positions; ++p)
    if (!mask[p]) std::fill_n(v.data() + p * inner, inner, value);
  return make_result<T>(x.shape(), std::move(v), "masked_fill", {&x},
                        [x, mask, inner, positions](const Node<T>& out) {
                          auto gx = grad_buffer(x);
                          for (std::size_t p = 0; p < positions; ++p) {
                            if (!mask[p]) continue;
                            for (std::size_t i = 0; i < inner; ++i)
                              gx[p * inner + i] += out.grad[p * inner + i];
                          }
                        });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T e : x.data()) acc += e;
  return make_result<T>({1}, {acc}, "sum", {&x}, [x](const Node<T>& out) {
    auto gx = grad_buffer(x);
    for (auto& g : gx) g += out.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  require(x.size() > 0, "mean: empty tensor");
  T acc = 0;
  for (T e : x.data()) acc += e;
  const T n = T(x.size());
  return make_result<T>({1}, {acc / n}, "mean", {&x}, [x, n](const Node<T>& out) {
    auto gx = grad_buffer(x);
    for (auto& g : gx) g += out.grad[0] / n;
  });
}

template <class T>
Tensor<T> max(const Tensor<T>& x) {
  require(x.size() > 0, "max: empty tensor");
  auto xd = x.data();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < xd.size(); ++i)
    if (xd[i] > xd[arg]) arg = i;
  if (kink_monitor().enabled) {
    for (std::size_t i = 0; i < xd.size(); ++i) {
      note_branch(i == arg);
      if (i != arg && std::abs(xd[i] - xd[arg]) < T(1e-6)) note_near_kink();
    }
  }
  return make_result<T>({1}, {xd[arg]}, "max", {&x}, [x, arg](const Node<T>& out) {
    grad_buffer(x)[arg] += out.grad[0];
  });
}

template <class T>
Tensor<T> sum_last(const Tensor<T>& x) {
  const std::size_t k = last_dim(x);
  const std::size_t rows = x.size() / k;
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  if (shape.empty()) shape = {1};
  std::vector<T> v(rows, T(0));
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < k; ++j) v[r] += xd[r * k + j];
  return make_result<T>(std::move(shape), std::move(v), "sum_last", {&x},
                        [x, rows, k](const Node<T>& out) {
                          auto gx = grad_buffer(x);
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += out.grad[r];
                        });
}

#define TEMPSEG_OPS(T)                                                                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                          \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                            std::size_t, std::size_t);                                    \
  template Tensor<T> depthwise_conv1d(const Tensor<T>&, const Tensor<T>&,                 \
                                      const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> softmax(const Tensor<T>&, std::span<const T>);                       \
  template Tensor<T> sigmoid(const Tensor<T>&);                                           \
  template Tensor<T> relu(const Tensor<T>&);                                              \
  template Tensor<T> tanh(const Tensor<T>&);                                              \
  template Tensor<T> lstm_cell(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                               const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> select_time(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> stack_time(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);              \
  template Tensor<T> concat_last(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> band_scores(const Tensor<T>&, const Tensor<T>&, std::size_t,         \
                                 std::size_t, T);                                         \
  template Tensor<T> band_apply(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> masked_fill(const Tensor<T>&, const Mask&, T);                       \
  template Tensor<T> sum(const Tensor<T>&);                                               \
  template Tensor<T> mean(const Tensor<T>&);                                              \
  template Tensor<T> max(const Tensor<T>&);                                               \
  template Tensor<T> sum_last(const Tensor<T>&);

TEMPSEG_OPS(float)
TEMPSEG_OPS(double)

#undef TEMPSEG_OPS

}  // namespace tempseg::tensor
