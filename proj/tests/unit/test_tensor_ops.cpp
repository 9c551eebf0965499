// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "tempseg/error.hpp"
#include "tempseg/gradcheck.hpp"
#include "tempseg/ops.hpp"
#include "test_util.hpp"

namespace ts = tempseg::tensor;
using D = ts::Tensor<double>;
using tempseg::testing::random_tensor;

namespace {

void expect_values(const D& t, const std::vector<double>& want, double tol = 1e-12) {
  ASSERT_EQ(t.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t.data()[i], want[i], tol) << "at " << i;
}

D param(ts::Shape shape, std::vector<double> v) { return D::parameter(std::move(shape), std::move(v)); }

}  // namespace

TEST(Ops, ElementwiseAndBias) {
  const auto a = D::constant({2, 2}, {1, 2, 3, 4});
  const auto b = D::constant({2, 2}, {5, 6, 7, 8});
  expect_values(ts::add(a, b), {6, 8, 10, 12});
  expect_values(ts::sub(a, b), {-4, -4, -4, -4});
  expect_values(ts::mul(a, b), {5, 12, 21, 32});
  expect_values(ts::scale(a, 0.5), {0.5, 1, 1.5, 2});
  expect_values(ts::add_bias(a, D::constant({2}, {10, 20})), {11, 22, 13, 24});
  EXPECT_THROW(ts::add(a, D::constant({4}, {1, 2, 3, 4})), tempseg::InvalidArgument);
}

TEST(Ops, Matmul) {
  const auto x = D::constant({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  const auto w = D::constant({3, 2}, {1, 0, 0, 1, 1, 1});
  expect_values(ts::matmul(x, w), {4, 5, 10, 11});
}

TEST(Ops, Conv1dMatchesDirectSum) {
  std::mt19937_64 rng(1);
  const std::size_t B = 2, T = 7, Ci = 3, Co = 4, K = 3;
  const auto x = random_tensor<double>(rng, {B, T, Ci});
  const auto w = random_tensor<double>(rng, {Co, Ci, K});
  const auto bias = random_tensor<double>(rng, {Co});
  for (std::size_t stride : {1u, 2u}) {
    const auto y = ts::conv1d(x, w, bias, stride, 1);
    const std::size_t To = (T + 2 - K) / stride + 1;
    ASSERT_EQ(y.shape(), (ts::Shape{B, To, Co}));
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < To; ++t)
        for (std::size_t o = 0; o < Co; ++o) {
          double s = bias.data()[o];
          for (std::size_t k = 0; k < K; ++k) {
            const long src = static_cast<long>(t * stride + k) - 1;
            if (src < 0 || src >= static_cast<long>(T)) continue;
            for (std::size_t c = 0; c < Ci; ++c)
              s += w.data()[(o * Ci + c) * K + k] * x.data()[(b * T + src) * Ci + c];
          }
          EXPECT_NEAR(y.data()[(b * To + t) * Co + o], s, 1e-12);
        }
  }
}

TEST(Ops, DepthwiseConv) {
  const auto x = D::constant({1, 4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  const auto w = D::constant({2, 3}, {1, 1, 1, 0, 1, 0});
  expect_values(ts::depthwise_conv1d(x, w, D{}, 1, 1), {3, 10, 6, 20, 9, 30, 7, 40});
  expect_values(ts::depthwise_conv1d(x, w, D{}, 2, 1), {3, 10, 9, 30});
}

TEST(Ops, LayerNormSoftmaxActivations) {
  const auto x = D::constant({1, 4}, {1, 2, 3, 4});
  const auto ln = ts::layer_norm(x, D::constant({4}, {1, 1, 1, 1}), D::constant({4}, {0, 0, 0, 0}), 0.0);
  const double sd = std::sqrt(1.25);
  expect_values(ln, {-1.5 / sd, -0.5 / sd, 0.5 / sd, 1.5 / sd});

  const auto sm = ts::softmax(D::constant({1, 3}, {0, std::log(2.0), std::log(5.0)}));
  expect_values(sm, {0.125, 0.25, 0.625});
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> mask = {0, -inf, 0, -inf, -inf, -inf};
  expect_values(ts::softmax(D::constant({2, 3}, {1, 2, 1, 3, 4, 5}), std::span<const double>(mask)), {0.5, 0, 0.5, 0, 0, 0});

  expect_values(ts::sigmoid(D::constant({2}, {0, std::log(3.0)})), {0.5, 0.75});
  expect_values(ts::relu(D::constant({3}, {-1, 0, 2})), {0, 0, 2});
  expect_values(ts::tanh(D::constant({1}, {0.5})), {std::tanh(0.5)});
}

TEST(Ops, LstmCellMatchesScalarReference) {
  std::mt19937_64 rng(7);
  const std::size_t I = 3, H = 2;
  const auto x = random_tensor<double>(rng, {1, I});
  const auto st = random_tensor<double>(rng, {1, 2 * H});
  const auto wih = random_tensor<double>(rng, {I, 4 * H});
  const auto whh = random_tensor<double>(rng, {H, 4 * H});
  const auto b = random_tensor<double>(rng, {4 * H});
  const auto out = ts::lstm_cell(x, st, wih, whh, b);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> gates(4 * H);
  for (std::size_t j = 0; j < 4 * H; ++j) {
    double s = b.data()[j];
    for (std::size_t i = 0; i < I; ++i) s += x.data()[i] * wih.data()[i * 4 * H + j];
    for (std::size_t h = 0; h < H; ++h) s += st.data()[h] * whh.data()[h * 4 * H + j];
    gates[j] = s;
  }
  for (std::size_t h = 0; h < H; ++h) {
    const double i = sig(gates[h]), f = sig(gates[H + h]), g = std::tanh(gates[2 * H + h]),
                 o = sig(gates[3 * H + h]);
    const double c = f * st.data()[H + h] + i * g;
    EXPECT_NEAR(out.data()[H + h], c, 1e-12);
    EXPECT_NEAR(out.data()[h], o * std::tanh(c), 1e-12);
  }
}

TEST(Ops, TimeSlicingAndConcat) {
  const auto x = D::constant({1, 3, 2}, {1, 2, 3, 4, 5, 6});
  expect_values(ts::select_time(x, 1), {3, 4});
  const auto back = ts::stack_time<double>({ts::select_time(x, 0), ts::select_time(x, 1), ts::select_time(x, 2)});
  EXPECT_EQ(back.shape(), x.shape());
  expect_values(back, {1, 2, 3, 4, 5, 6});
  expect_values(ts::slice_last(x, 1, 2), {2, 4, 6});
  expect_values(ts::concat_last(ts::slice_last(x, 1, 2), ts::slice_last(x, 0, 1)), {2, 1, 4, 3, 6, 5});
  expect_values(ts::masked_fill(x, {1, 0, 1}, -1.0), {1, 2, -1, -1, 5, 6});
  expect_values(ts::sum_last(x), {3, 7, 11});
  EXPECT_DOUBLE_EQ(ts::sum(x).item(), 21);
  EXPECT_DOUBLE_EQ(ts::mean(x).item(), 3.5);
  EXPECT_DOUBLE_EQ(ts::max(x).item(), 6);
}

TEST(Ops, BandScoresAndApply) {
  // One head, window 3: score (t, j) pairs q[t] with k[t + j - 1].
  const auto q = D::constant({1, 3, 1}, {1, 2, 3});
  const auto k = D::constant({1, 3, 1}, {10, 20, 30});
  expect_values(ts::band_scores(q, k, 1, 3, 1.0), {0, 10, 20, 20, 40, 60, 60, 90, 0});
  const auto attn = D::constant({1, 1, 3, 3}, {0, 1, 0, 0.5, 0, 0.5, 1, 0, 0});
  expect_values(ts::band_apply(attn, k), {10, 20, 20});
}

TEST(Autodiff, FanOutAccumulates) {
  const auto x = param({3}, {1.5, -2.0, 0.25});
  ts::Tape<double> tape;
  D loss;
  {
    ts::TapeScope<double> scope(tape);
    loss = ts::sum(ts::add(ts::mul(x, x), x));  // d/dx = 2x + 1
  }
  tape.backward(loss);
  expect_values(D::constant({3}, std::vector<double>(x.grad().begin(), x.grad().end())), {4.0, -3.0, 1.5});
  // A second backward pass accumulates into the leaf.
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Autodiff, NoTapeMeansNoGraph) {
  const auto x = param({2}, {1, 2});
  const auto y = ts::mul(x, x);
  EXPECT_EQ(ts::active_tape<double>(), nullptr);
  EXPECT_FALSE(y.has_grad());
}

TEST(Autodiff, CheckFiniteNamesTheOp) {
  ts::set_check_finite(true);
  const auto x = D::constant({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
  try {
    ts::sigmoid(x);
    ADD_FAILURE() << "expected NumericError";
  } catch (const tempseg::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("sigmoid"), std::string::npos) << e.what();
  }
  ts::set_check_finite(false);
  EXPECT_NO_THROW(ts::sigmoid(x));
}

TEST(Gradcheck, CubicErrorScalesWithEpsSquared) {
  // Central differences of x^3 carry exactly eps^2 truncation error.
  auto f = [](const std::vector<D>& in) { return ts::sum(ts::mul(ts::mul(in[0], in[0]), in[0])); };
  const auto x = param({1}, {0.1});
  const double e1 = ts::gradcheck(f, {x}, 1e-2).max_rel_error;
  const double e2 = ts::gradcheck(f, {x}, 1e-3).max_rel_error;
  EXPECT_NEAR(e1, 1e-4, 1e-9);
  EXPECT_NEAR(e2 / e1, 1e-2, 1e-4);
}

TEST(Gradcheck, CatchesInjectedFault) {
  std::mt19937_64 rng(3);
  const auto v = tempseg::testing::normal_values(rng, 6);
  const auto x = param({2, 3}, v);
  auto f = [](const std::vector<D>& in) { return ts::sum(ts::tanh(in[0])); };
  EXPECT_LT(ts::gradcheck(f, {x}).max_rel_error, 1e-6);
  ts::inject_backward_fault("tanh");
  const double bad = ts::gradcheck(f, {x}).max_rel_error;
  ts::clear_backward_fault();
  EXPECT_GT(bad, 0.1);
}
