// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tempseg/error.hpp"
#include "tempseg/infer.hpp"
#include "test_util.hpp"

namespace inf = tempseg::infer;
using inf::ScoredSegment;
using tempseg::featio::Modality;

TEST(Nms, AgreesWithQuadraticReference) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto set = tempseg::oracle::random_nms_set(rng);
    const double thr = 0.1 * std::uniform_int_distribution<int>(0, 10)(rng);
    const std::size_t cap = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    ASSERT_EQ(inf::nms(set, thr, cap), tempseg::oracle::nms(set, thr, cap)) << "trial " << trial;
  }
}

TEST(Nms, SubsetSeparatedAndIdempotent) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto set = tempseg::oracle::random_nms_set(rng);
    const double thr = 0.1 * std::uniform_int_distribution<int>(0, 10)(rng);
    const auto kept = inf::nms(set, thr, 100);
    for (const auto& k : kept) EXPECT_NE(std::find(set.begin(), set.end(), k), set.end());
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        EXPECT_LE(tempseg::oracle::iou(kept[i].start, kept[i].end, kept[j].start, kept[j].end), thr);
    EXPECT_EQ(inf::nms(kept, thr, 100), kept);
  }
}

TEST(Nms, RankingTieBreaks) {
  const ScoredSegment a{2.0, 3.0, 0.5}, b{1.0, 4.0, 0.5}, c{1.0, 2.0, 0.5}, d{0.0, 9.0, 0.9};
  EXPECT_TRUE(inf::ranks_before(d, a));
  EXPECT_TRUE(inf::ranks_before(b, a));
  EXPECT_TRUE(inf::ranks_before(c, b));
  EXPECT_FALSE(inf::ranks_before(a, a));
  const auto kept = inf::nms({a, b, c, d}, 1.0, 10);
  EXPECT_EQ(kept, (std::vector<ScoredSegment>{d, c, b, a}));
  EXPECT_EQ(inf::nms({a, b, c, d}, 1.0, 2).size(), 2u);
  EXPECT_TRUE(inf::nms({}, 0.5, 10).empty());
}

TEST(Nms, SuppressesOnlyAboveThreshold) {
  // IoU of these two is exactly 0.5.
  const ScoredSegment hi{0.0, 2.0, 0.9}, lo{0.0, 1.0, 0.8};
  EXPECT_EQ(inf::nms({hi, lo}, 0.5, 10).size(), 2u);
  EXPECT_EQ(inf::nms({hi, lo}, 0.49, 10).size(), 1u);
}

TEST(Confidence, MaxScore) {
  EXPECT_EQ(inf::sequence_confidence({}), 0.0);
  EXPECT_EQ(inf::sequence_confidence({{0, 1, 0.3}, {1, 2, 0.8}, {2, 3, 0.1}}), 0.8);
}

TEST(Fusion, MaxConfidenceAndTaggedUnion) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    inf::PredictionRecord a{"x", 0.0, tempseg::oracle::random_nms_set(rng, 6)};
    inf::PredictionRecord v{"x", 0.0, tempseg::oracle::random_nms_set(rng, 6)};
    a.confidence = inf::sequence_confidence(a.segments);
    v.confidence = inf::sequence_confidence(v.segments);
    const auto f = inf::fuse_modalities(a, v);
    EXPECT_EQ(f.confidence, std::max(a.confidence, v.confidence));
    ASSERT_EQ(f.segments.size(), a.segments.size() + v.segments.size());
    for (std::size_t i = 0; i < f.segments.size(); ++i) {
      const bool audio = i < a.segments.size();
      const auto& src = audio ? a.segments[i] : v.segments[i - a.segments.size()];
      EXPECT_EQ(f.segments[i].modality, audio ? Modality::kAudio : Modality::kVideo);
      EXPECT_EQ(f.segments[i].start, src.start);
      EXPECT_EQ(f.segments[i].end, src.end);
      EXPECT_EQ(f.segments[i].score, src.score);
    }
  }
  EXPECT_THROW(inf::fuse_modalities({"a", 0, {}}, {"b", 0, {}}), tempseg::InvalidArgument);
}

TEST(Fusion, PairsRecordsById) {
  const std::vector<inf::PredictionRecord> audio{{"a", 0.2, {}}, {"b", 0.9, {}}};
  const std::vector<inf::PredictionRecord> video{{"b", 0.1, {}}, {"a", 0.7, {}}};
  const auto f = inf::fuse_predictions(audio, video);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].id, "a");
  EXPECT_EQ(f[0].confidence, 0.7);
  EXPECT_EQ(f[1].confidence, 0.9);
  EXPECT_THROW(inf::fuse_predictions(audio, {{"a", 0.1, {}}}), tempseg::FormatError);
}

TEST(Predictions, FileRoundTrip) {
  tempseg::testing::TempDir dir("pred");
  const std::vector<inf::PredictionRecord> rows{
      {"a", 0.75, {{0.5, 1.5, 0.75, Modality::kAudio}, {2.0, 2.125, 0.5, Modality::kVideo}}},
      {"b", 0.0, {}},
  };
  inf::write_predictions(dir / "p.jsonl", rows);
  EXPECT_EQ(inf::read_predictions(dir / "p.jsonl"), rows);
}

TEST(Propose, RespectsThresholdTopkAndDuration) {
  tempseg::ModelConfig mc;
  mc.input_dim = 4;
  mc.model_dim = 8;
  mc.n_blocks = 3;
  mc.n_levels = 3;
  mc.window_size = 3;
  mc.n_heads = 2;
  mc.max_len = 64;
  tempseg::Detector<float> det(mc);
  det.initialize(1);
  tempseg::testing::randomize_parameters(det.parameters(), 4, 0.5);
  tempseg::featio::SynthConfig sc;
  sc.dim = 4;
  sc.duration_sec = 2.0;
  sc.n_forged = 1;
  const auto seq = tempseg::featio::synth_sample(9, sc).sequence;
  inf::InferConfig cfg;
  cfg.pre_nms_threshold = 0.2;
  cfg.pre_nms_topk = 15;
  const auto props = inf::propose(det, seq, cfg);
  EXPECT_LE(props.size(), 15u);
  for (std::size_t i = 0; i < props.size(); ++i) {
    EXPECT_GE(props[i].score, 0.2);
    EXPECT_GE(props[i].start, 0.0);
    EXPECT_LE(props[i].end, seq.duration_sec());
    EXPECT_LT(props[i].start, props[i].end);
    if (i) {
      EXPECT_FALSE(inf::ranks_before(props[i], props[i - 1]));
    }
  }
  const auto rec = inf::predict(det, seq, cfg);
  EXPECT_EQ(rec.confidence, inf::sequence_confidence(rec.segments));
  EXPECT_EQ(rec.segments, inf::nms(props, cfg.nms_iou, cfg.max_outputs));
}

TEST(InferConfig, Validation) {
  inf::InferConfig c;
  EXPECT_NO_THROW(c.validate());
  c.nms_iou = 1.5;
  EXPECT_THROW(c.validate(), tempseg::InvalidArgument);
  c = {};
  c.pre_nms_topk = 10;
  EXPECT_THROW(c.validate(), tempseg::InvalidArgument);
}
