// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "gradcheck_suite.hpp"

#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <random>

#include "tempseg/backbone.hpp"
#include "tempseg/detector.hpp"
#include "tempseg/heads.hpp"
#include "tempseg/loss.hpp"
#include "tempseg/ops.hpp"
#include "tempseg/parameters.hpp"

namespace tempseg::cli {

namespace {

namespace ts = tempseg::tensor;
using Td = ts::Tensor<double>;
using Inputs = std::vector<Td>;
using ts::gradcheck;
using ts::GradcheckReport;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed * 0x9e3779b97f4a7c15ULL + 17) {}

  std::vector<double> values(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng_);
    return v;
  }
  Td param(ts::Shape s, double lo = -1.0, double hi = 1.0) {
    const std::size_t n = ts::numel(s);
    return Td::parameter(std::move(s), values(n, lo, hi));
  }
  Td constant(ts::Shape s, double lo = -1.0, double hi = 1.0) {
    const std::size_t n = ts::numel(s);
    return Td::constant(std::move(s), values(n, lo, hi));
  }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Scalar read-out with fixed random weights, so no gradient cancels by symmetry.
Td weighted(const Td& out, const Td& w) { return ts::sum(ts::mul(out, w)); }

ts::Mask prefix_mask(std::size_t batch, std::size_t len, const std::vector<std::size_t>& valid) {
  ts::Mask m(batch * len, 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < valid[b]; ++t) m[b * len + t] = 1;
  return m;
}

void randomize(ts::ParameterSet<double>& set, Gen& g, double std) {
  std::normal_distribution<double> n(0.0, std);
  for (auto& [name, t] : set.entries()) {
    auto v = Td(t).mutable_data();
    const bool gain = name.size() >= 6 && name.compare(name.size() - 6, 6, ".gamma") == 0;
    for (auto& x : v) x = n(g.rng()) + (gain ? 1.0 : 0.0);
  }
}

template <class F>
GradcheckCase unary(std::string name, F op, ts::Shape shape, double lo = -1.0, double hi = 1.0) {
  return {std::move(name), [=](std::uint64_t seed) {
            Gen g(seed);
            Td x = g.param(shape, lo, hi);
            Td y0 = op(x);
            Td w = g.constant(y0.shape());
            return gradcheck([=](const Inputs& in) { return weighted(op(in[0]), w); }, {x});
          }};
}

template <class F>
GradcheckCase binary(std::string name, F op, ts::Shape sa, ts::Shape sb) {
  return {std::move(name), [=](std::uint64_t seed) {
            Gen g(seed);
            Td a = g.param(sa), b = g.param(sb);
            Td w = g.constant(op(a, b).shape());
            return gradcheck([=](const Inputs& in) { return weighted(op(in[0], in[1]), w); }, {a, b});
          }};
}

backbone::ModelConfig tiny_model() {
  backbone::ModelConfig m;
  m.input_dim = 8;
  m.model_dim = 8;
  m.n_blocks = 2;
  m.n_levels = 2;
  m.window_size = 3;
  m.n_heads = 2;
  m.theta = 0.6;
  m.downsample_stride = 2;
  m.max_len = 8;
  return m;
}

GradcheckReport check_detector(std::uint64_t seed, bool paper_literal) {
  Gen g(seed);
  const auto mc = tiny_model();
  Detector<double> det(mc);
  det.randomize(seed, 0.3);
  const std::size_t batch = 2, len = mc.max_len;
  Td x = g.param({batch, len, mc.input_dim});
  const ts::Mask mask = prefix_mask(batch, len, {len, len - 2});

  // Level masks and lengths from a value-only pass.
  const auto probe = det.forward(x, mask);
  // Short spans go to level 0, longer ones to level 1.
  heads::RegressionRanges ranges;
  ranges.bounds = {{0.0, 3.0}, {3.0, std::numeric_limits<double>::infinity()}};
  const featio::SegmentSet gt0{{0.5, 2.0}, {3.0, 7.5}};
  const featio::SegmentSet gt1{{1.0, 5.0}};
  const auto targets = loss::collect_targets({&gt0, &gt1}, {1.0, 1.0}, probe.pyramid.lengths,
                                             probe.pyramid.strides, probe.pyramid.masks, ranges);
  loss::LossConfig lc;
  lc.paper_literal_focal = paper_literal;
  lc.lambda = 0.5;

  Inputs inputs = det.parameters().tensors();
  inputs.push_back(x);
  const std::size_t n_params = det.parameters().size();
  // The closure reads the shared parameter leaves, which gradcheck perturbs.
  auto f = [&det, &targets, lc, mask, n_params](const Inputs& in) {
    const auto out = det.forward(in[n_params], mask);
    return loss::total_loss(out.cls, out.reg, targets, lc).total;
  };
  return gradcheck(f, inputs);
}

}  // namespace

std::vector<GradcheckCase> gradcheck_cases() {
  std::vector<GradcheckCase> c;
  const ts::Shape s3{2, 3, 4};

  c.push_back(binary("add", [](const Td& a, const Td& b) { return ts::add(a, b); }, s3, s3));
  c.push_back(binary("sub", [](const Td& a, const Td& b) { return ts::sub(a, b); }, s3, s3));
  c.push_back(binary("mul", [](const Td& a, const Td& b) { return ts::mul(a, b); }, s3, s3));
  c.push_back(unary("scale", [](const Td& x) { return ts::scale(x, -1.7); }, s3));
  c.push_back(binary("add_bias", [](const Td& a, const Td& b) { return ts::add_bias(a, b); }, s3, {4}));
  c.push_back(unary("reshape", [](const Td& x) { return ts::reshape(x, {6, 4}); }, s3));
  c.push_back(binary("matmul", [](const Td& a, const Td& b) { return ts::matmul(a, b); }, s3, {4, 5}));

  c.push_back({"conv1d", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td x = g.param({2, 7, 3}), w = g.param({4, 3, 3}), b = g.param({4});
                 Td o1 = g.constant({2, 7, 4}), o2 = g.constant({2, 4, 4});
                 return gradcheck(
                     [=](const Inputs& in) {
                       return ts::add(weighted(ts::conv1d(in[0], in[1], in[2], 1, 1), o1),
                                      weighted(ts::conv1d(in[0], in[1], in[2], 2, 1), o2));
                     },
                     {x, w, b});
               }});
  c.push_back({"depthwise_conv1d", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td x = g.param({2, 7, 3}), w = g.param({3, 3}), b = g.param({3});
                 Td o1 = g.constant({2, 7, 3}), o2 = g.constant({2, 4, 3});
                 return gradcheck(
                     [=](const Inputs& in) {
                       return ts::add(weighted(ts::depthwise_conv1d(in[0], in[1], in[2], 1, 1), o1),
                                      weighted(ts::depthwise_conv1d(in[0], in[1], in[2], 2, 1), o2));
                     },
                     {x, w, b});
               }});
  c.push_back({"layer_norm", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td x = g.param({2, 3, 5}), gm = g.param({5}, 0.5, 1.5), bt = g.param({5});
                 Td w = g.constant({2, 3, 5});
                 return gradcheck(
                     [=](const Inputs& in) { return weighted(ts::layer_norm(in[0], in[1], in[2]), w); },
                     {x, gm, bt});
               }});
  c.push_back({"softmax", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td x = g.param({3, 5}, -2.0, 2.0);
                 Td w = g.constant({3, 5});
                 std::vector<double> mask(15, 0.0);
                 const double ninf = -std::numeric_limits<double>::infinity();
                 mask[g.index(5)] = ninf;
                 mask[5 + g.index(5)] = ninf;
                 for (std::size_t j = 0; j < 5; ++j) mask[10 + j] = ninf;  // fully masked row
                 return gradcheck(
                     [=](const Inputs& in) {
                       return weighted(ts::softmax(in[0], std::span<const double>(mask)), w);
                     },
                     {x});
               }});
  c.push_back(unary("sigmoid", [](const Td& x) { return ts::sigmoid(x); }, s3, -3.0, 3.0));
  c.push_back(unary("relu", [](const Td& x) { return ts::relu(x); }, s3));
  c.push_back(unary("tanh", [](const Td& x) { return ts::tanh(x); }, s3, -2.0, 2.0));
  c.push_back({"lstm_cell", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td x = g.param({2, 3}), st = g.param({2, 8}), wi = g.param({3, 16}),
                    wh = g.param({4, 16}), b = g.param({16});
                 Td w = g.constant({2, 8});
                 return gradcheck(
                     [=](const Inputs& in) {
                       return weighted(ts::lstm_cell(in[0], in[1], in[2], in[3], in[4]), w);
                     },
                     {x, st, wi, wh, b});
               }});
  c.push_back(unary(
      "select_stack_time",
      [](const Td& x) {
        // Reverse time through select_time and stack_time.
        std::vector<Td> steps;
        for (std::size_t t = x.dim(1); t-- > 0;) steps.push_back(ts::select_time(x, t));
        return ts::stack_time(steps);
      },
      s3));
  c.push_back(binary(
      "slice_concat_last",
      [](const Td& a, const Td& b) { return ts::concat_last(ts::slice_last(a, 1, 3), b); }, s3,
      {2, 3, 2}));
  c.push_back({"band_scores", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td q = g.param({2, 5, 4}), k = g.param({2, 5, 4});
                 Td w = g.constant({2, 2, 5, 3});
                 return gradcheck(
                     [=](const Inputs& in) { return weighted(ts::band_scores(in[0], in[1], 2, 3, 0.5), w); },
                     {q, k});
               }});
  c.push_back({"band_apply", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td a = g.param({2, 2, 5, 3}), v = g.param({2, 5, 4});
                 Td w = g.constant({2, 5, 4});
                 return gradcheck([=](const Inputs& in) { return weighted(ts::band_apply(in[0], in[1]), w); },
                                  {a, v});
               }});
  c.push_back({"masked_fill", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td x = g.param({2, 4, 3});
                 Td w = g.constant({2, 4, 3});
                 const ts::Mask m = prefix_mask(2, 4, {4, 1 + g.index(3)});
                 return gradcheck([=](const Inputs& in) { return weighted(ts::masked_fill(in[0], m, 0.0), w); },
                                  {x});
               }});
  c.push_back(unary("sum", [](const Td& x) { return ts::sum(x); }, s3));
  c.push_back(unary("mean", [](const Td& x) { return ts::mean(x); }, s3));
  c.push_back(unary("max", [](const Td& x) { return ts::max(x); }, s3));
  c.push_back(unary("sum_last", [](const Td& x) { return ts::sum_last(x); }, s3));

  c.push_back({"mdc_project", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td z = g.param({2, 6, 3}), w = g.param({4, 3, 3});
                 Td o = g.constant({2, 6, 4});
                 const ts::Mask m = prefix_mask(2, 6, {6, 4});
                 return gradcheck(
                     [=](const Inputs& in) { return weighted(backbone::mdc_project(in[0], m, in[1], 0.6), o); },
                     {z, w});
               }});
  c.push_back({"local_attention", [](std::uint64_t seed) {
                 Gen g(seed);
                 backbone::AttentionParams<double> p;
                 Inputs in{g.param({2, 6, 4})};
                 for (Td* t : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) *t = g.param({4, 4});
                 for (Td* t : {&p.b_q, &p.b_k, &p.b_v, &p.b_o}) *t = g.param({4});
                 for (Td* t : {&p.w_q, &p.b_q, &p.w_k, &p.b_k, &p.w_v, &p.b_v, &p.w_o, &p.b_o}) in.push_back(*t);
                 Td o = g.constant({2, 6, 4});
                 const ts::Mask m = prefix_mask(2, 6, {6, 3});
                 return gradcheck(
                     [=](const Inputs& v) { return weighted(backbone::local_attention(v[0], m, p, 2, 3), o); },
                     in);
               }});
  c.push_back({"lstm_sequence", [](std::uint64_t seed) {
                 Gen g(seed);
                 backbone::LstmParams<double> p{g.param({3, 16}), g.param({4, 16}), g.param({16})};
                 Td x = g.param({2, 4, 3}), h0 = g.param({2, 8});
                 Td o = g.constant({2, 4, 4}), of = g.constant({2, 8});
                 return gradcheck(
                     [=](const Inputs& in) {
                       Td fin;
                       Td h = backbone::lstm_sequence(in[0], p, in[1], &fin);
                       return ts::add(weighted(h, o), weighted(fin, of));
                     },
                     {x, h0, p.w_ih, p.w_hh, p.bias});
               }});
  c.push_back({"rtlm_block", [](std::uint64_t seed) {
                 Gen g(seed);
                 backbone::ModelConfig mc;
                 mc.input_dim = 3;
                 mc.model_dim = 8;
                 mc.n_blocks = 1;
                 mc.n_levels = 1;
                 mc.window_size = 3;
                 mc.n_heads = 2;
                 mc.max_len = 6;
                 ts::ParameterSet<double> set;
                 const auto bp = backbone::register_backbone(set, mc);
                 randomize(set, g, 0.4);
                 Td x = g.param({2, 6, 8});
                 Td o = g.constant({2, 6, 8});
                 const ts::Mask m = prefix_mask(2, 6, {6, 4});
                 Inputs in = set.tensors();
                 in.push_back(x);
                 const std::size_t xi = in.size() - 1;
                 const auto blk = bp.blocks[0];
                 return gradcheck(
                     [=](const Inputs& v) {
                       return weighted(backbone::rtlm_block(v[xi], m, blk, {2, 3}), o);
                     },
                     in);
               }});
  c.push_back({"build_pyramid", [](std::uint64_t seed) {
                 Gen g(seed);
                 const auto mc = tiny_model();
                 ts::ParameterSet<double> set;
                 const auto bp = backbone::register_backbone(set, mc);
                 randomize(set, g, 0.4);
                 Td x = g.param({2, 8, 8});
                 const ts::Mask m = prefix_mask(2, 8, {8, 5});
                 Td o0 = g.constant({2, 8, 8}), o1 = g.constant({2, 4, 8});
                 Inputs in = set.tensors();
                 in.push_back(x);
                 const std::size_t xi = in.size() - 1;
                 return gradcheck(
                     [=](const Inputs& v) {
                       const auto p = backbone::build_pyramid(v[xi], m, bp, mc);
                       return ts::add(weighted(p.levels[0], o0), weighted(p.levels[1], o1));
                     },
                     in);
               }});
  c.push_back({"focal_loss", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td p = g.param({12}, 0.05, 0.95);
                 std::vector<std::uint8_t> labels(12), valid(12);
                 for (std::size_t i = 0; i < 12; ++i) {
                   labels[i] = g.index(3) == 0;
                   valid[i] = g.index(5) != 0;
                 }
                 loss::LossConfig std_cfg, lit_cfg;
                 lit_cfg.paper_literal_focal = true;
                 return gradcheck(
                     [=](const Inputs& in) {
                       return ts::add(loss::focal_sum(in[0], labels, valid, std_cfg),
                                      ts::scale(loss::focal_sum(in[0], labels, valid, lit_cfg), 0.5));
                     },
                     {p});
               }});
  c.push_back({"diou_loss", [](std::uint64_t seed) {
                 Gen g(seed);
                 Td off = g.param({6, 2}, 0.2, 4.0);
                 std::vector<loss::RegressionTarget> tg;
                 for (std::size_t i = 0; i < 6; ++i) {
                   const auto v = g.values(3, 0.0, 1.0);
                   const double center = 4.0 + 8.0 * v[0];
                   const double stride = i % 2 ? 2.0 : 1.0;
                   const double start = center - 4.0 * v[1] - 0.1;
                   tg.push_back({i, center, stride, 2.0, {start / 2.0, (center + 4.0 * v[2] + 0.1) / 2.0}});
                 }
                 return gradcheck([=](const Inputs& in) { return loss::diou_sum(in[0], tg); }, {off});
               }});
  c.push_back({"detector_loss", [](std::uint64_t seed) { return check_detector(seed, false); },
               kDetectorSeeds});
  c.push_back({"detector_loss_literal_focal", [](std::uint64_t seed) { return check_detector(seed, true); },
               kDetectorSeeds});
  return c;
}

std::vector<GradcheckOutcome> run_gradcheck_suite(std::size_t seeds, double tolerance,
                                                  const std::string& filter, std::ostream* log) {
  std::vector<GradcheckOutcome> out;
  for (const auto& c : gradcheck_cases()) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    GradcheckOutcome o;
    o.name = c.name;
    const std::size_t n = c.max_seeds ? std::min(seeds, c.max_seeds) : seeds;
    for (std::uint64_t s = 1; s <= n; ++s) {
      try {
        const auto r = c.run(s);
        o.max_rel_error = std::max(o.max_rel_error, r.max_rel_error);
        o.checked += r.checked;
        o.excluded += r.excluded.size();
      } catch (const std::exception& e) {
        o.error = "seed " + std::to_string(s) + ": " + e.what();
        break;
      }
      ++o.seeds;
    }
    o.passed = o.error.empty() && o.checked > 0 && o.max_rel_error < tolerance;
    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%-28s %s  max_rel_err=%.3e  checked=%zu  excluded=%zu  seeds=%zu",
                    o.name.c_str(), o.passed ? "PASS" : "FAIL", o.max_rel_error, o.checked, o.excluded,
                    o.seeds);
      *log << buf;
      if (!o.error.empty()) *log << "  error: " << o.error;
      *log << '\n';
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace tempseg::cli
