// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tempseg/error.hpp"
#include "tempseg/loss.hpp"
#include "test_util.hpp"

namespace ls = tempseg::loss;
namespace ts = tempseg::tensor;
using D = ts::Tensor<double>;
using tempseg::featio::Segment;

namespace {

double ref_focal(double p, bool pos, double gamma, double alpha) {
  return pos ? -alpha * std::pow(1 - p, gamma) * std::log(p) : -(1 - alpha) * std::pow(p, gamma) * std::log(1 - p);
}

double ref_diou(Segment p, Segment g) {
  const double inter = std::max(0.0, std::min(p.end, g.end) - std::max(p.start, g.start));
  const double uni = (p.end - p.start) + (g.end - g.start) - inter;
  const double enclose = std::max(p.end, g.end) - std::min(p.start, g.start);
  const double dc = (p.start + p.end) / 2 - (g.start + g.end) / 2;
  return inter / uni - (dc / enclose) * (dc / enclose);
}

}  // namespace

TEST(Focal, MatchesScalarReference) {
  ls::LossConfig cfg;
  for (double p : {1e-3, 0.1, 0.3, 0.5, 0.77, 0.999}) {
    EXPECT_NEAR(ls::focal_term(p, true, cfg), ref_focal(p, true, 2.0, 0.25), 1e-14);
    EXPECT_NEAR(ls::focal_term(p, false, cfg), ref_focal(p, false, 2.0, 0.25), 1e-14);
  }
  // Clamped at the ends.
  EXPECT_NEAR(ls::focal_term(0.0, true, cfg), ref_focal(1e-7, true, 2.0, 0.25), 1e-12);
  EXPECT_TRUE(std::isfinite(ls::focal_term(1.0, false, cfg)));
}

TEST(Focal, LiteralVariant) {
  ls::LossConfig cfg;
  cfg.paper_literal_focal = true;
  EXPECT_NEAR(ls::focal_term(0.4, true, cfg), -std::log(0.4) - 2.0 * std::pow(0.6, 0.25), 1e-14);
  EXPECT_EQ(ls::focal_term(0.4, false, cfg), 0.0);
}

TEST(Focal, LossNormalizesByPositives) {
  ls::LossConfig cfg;
  const std::vector<double> p{0.2, 0.9, 0.6, 0.1};
  const std::vector<std::uint8_t> y{1, 0, 1, 0}, valid{1, 1, 1, 0};
  const double sum = ref_focal(0.2, true, 2, 0.25) + ref_focal(0.9, false, 2, 0.25) + ref_focal(0.6, true, 2, 0.25);
  EXPECT_NEAR(ls::focal_loss(p, y, valid, cfg), sum / 2, 1e-14);
  EXPECT_NEAR(ls::focal_loss(p, {0, 0, 0, 0}, valid, cfg),
              ref_focal(0.2, false, 2, 0.25) + ref_focal(0.9, false, 2, 0.25) + ref_focal(0.6, false, 2, 0.25), 1e-14);
}

TEST(Diou, TextbookValues) {
  EXPECT_NEAR(1.0 - ls::diou_1d({0, 1}, {2, 3}), 13.0 / 9.0, 1e-15);
  EXPECT_DOUBLE_EQ(ls::diou_1d({1, 2}, {1, 2}), 1.0);
  EXPECT_NEAR(ls::diou_1d({0, 2}, {1, 3}), 1.0 / 3.0 - (1.0 / 3.0) * (1.0 / 3.0), 1e-15);
  EXPECT_THROW(ls::diou_1d({1, 1}, {2, 2}), tempseg::InvalidArgument);
  EXPECT_DOUBLE_EQ(ls::temporal_iou({0, 2}, {1, 3}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ls::temporal_iou({0, 1}, {1, 2}), 0.0);
  EXPECT_DOUBLE_EQ(ls::temporal_iou({1, 1}, {1, 1}), 0.0);
}

TEST(Diou, BoundedAndSymmetric) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 2000; ++i) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a == b || c == d) continue;
    const Segment p{std::min(a, b), std::max(a, b)}, g{std::min(c, d), std::max(c, d)};
    const double v = ls::diou_1d(p, g);
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(v, ls::diou_1d(g, p), 1e-12);
    EXPECT_NEAR(v, ref_diou(p, g), 1e-12);
  }
}

TEST(TotalLoss, MatchesManualFormula) {
  const std::vector<std::size_t> lengths{8, 4}, strides{1, 2};
  const auto ranges = tempseg::heads::RegressionRanges::from_boundaries({4}, 2);
  const tempseg::featio::SegmentSet s0{{0.5, 1.0}, {1.5, 3.5}}, s1{};
  const std::vector<ts::Mask> masks{{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0}, {1, 1, 1, 1, 1, 1, 1, 0}};
  const auto targets = ls::collect_targets({&s0, &s1}, {2.0, 2.0}, lengths, strides, masks, ranges);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> up(0.02, 0.98), ud(0.1, 3.0);
  std::vector<D> cls, reg;
  for (std::size_t l = 0; l < 2; ++l) {
    std::vector<double> p(2 * lengths[l]), d(4 * lengths[l]);
    for (auto& v : p) v = up(rng);
    for (auto& v : d) v = ud(rng);
    cls.push_back(D::constant({2, lengths[l], 1}, p));
    reg.push_back(D::constant({2, lengths[l], 2}, d));
  }
  for (double lambda : {0.0, 0.01, 1.0}) {
    ls::LossConfig cfg;
    cfg.lambda = lambda;
    double focal = 0.0, diou = 0.0;
    std::size_t npos = 0;
    for (std::size_t l = 0; l < 2; ++l) {
      const auto& lv = targets.levels[l];
      for (std::size_t i = 0; i < lv.valid.size(); ++i)
        if (lv.valid[i]) focal += ref_focal(cls[l].data()[i], lv.labels[i], 2.0, 0.25);
      for (const auto& t : lv.positives) {
        ++npos;
        const double ds = reg[l].data()[2 * t.position], de = reg[l].data()[2 * t.position + 1];
        const Segment pred{(t.center - ds * t.stride) / t.feature_fps, (t.center + de * t.stride) / t.feature_fps};
        diou += 1.0 - ref_diou(pred, t.gt);
      }
    }
    ASSERT_EQ(npos, targets.num_positive);
    ASSERT_GT(npos, 0u);
    const auto out = ls::total_loss(cls, reg, targets, cfg);
    EXPECT_NEAR(out.total.item(), (lambda * focal + diou) / double(npos), 1e-12);
    EXPECT_NEAR(out.cls, focal / double(npos), 1e-12);
    EXPECT_NEAR(out.reg, diou / double(npos), 1e-12);
    EXPECT_EQ(out.num_positive, npos);
  }
}

TEST(TotalLoss, AllGenuineBatchHasNoRegressionTerm) {
  const std::vector<std::size_t> lengths{4}, strides{1};
  const auto ranges = tempseg::heads::RegressionRanges::defaults(1);
  const tempseg::featio::SegmentSet none{};
  const auto targets = ls::collect_targets({&none}, {1.0}, lengths, strides, {{1, 1, 1, 0}}, ranges);
  EXPECT_EQ(targets.num_positive, 0u);
  const std::vector<D> cls{D::constant({1, 4, 1}, {0.1, 0.2, 0.3, 0.9})};
  const std::vector<D> reg{D::constant({1, 4, 2}, {1, 1, 1, 1, 1, 1, 1, 1})};
  ls::LossConfig cfg;
  const auto out = ls::total_loss(cls, reg, targets, cfg);
  const double focal = ref_focal(0.1, false, 2, 0.25) + ref_focal(0.2, false, 2, 0.25) + ref_focal(0.3, false, 2, 0.25);
  EXPECT_NEAR(out.total.item(), 0.01 * focal, 1e-14);
  EXPECT_EQ(out.reg, 0.0);
  cfg.lambda = 0.0;
  EXPECT_EQ(ls::total_loss(cls, reg, targets, cfg).total.item(), 0.0);
}

TEST(TotalLoss, ExplicitNormalizerOverridesCount) {
  const std::vector<D> cls{D::constant({1, 2, 1}, {0.3, 0.4})};
  const std::vector<D> reg{D::constant({1, 2, 2}, {1, 1, 1, 1})};
  const tempseg::featio::SegmentSet none{};
  const auto targets = ls::collect_targets({&none}, {1.0}, {2}, {1}, {{1, 1}},
                                           tempseg::heads::RegressionRanges::defaults(1));
  ls::LossConfig cfg;
  cfg.lambda = 1.0;
  const double base = ls::total_loss(cls, reg, targets, cfg).total.item();
  EXPECT_NEAR(ls::total_loss(cls, reg, targets, cfg, 4.0).total.item(), base / 4.0, 1e-15);
}

TEST(LossConfig, Validation) {
  ls::LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), tempseg::InvalidArgument);
  c = {};
  c.focal_balance = 1.5;
  EXPECT_THROW(c.validate(), tempseg::InvalidArgument);
}
