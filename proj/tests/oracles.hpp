// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Slow reference implementations and random case generators for the
// detection metrics and NMS. Written from the definitions, sharing no code
// with the library.

#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

#include "tempseg/heads.hpp"

namespace tempseg::oracle {

using heads::ScoredSegment;
using Seg = featio::Segment;

inline double iou(double a0, double a1, double b0, double b1) {
  const double lo = std::max(a0, b0), hi = std::min(a1, b1);
  const double inter = hi > lo ? hi - lo : 0.0;
  const double uni = (a1 - a0) + (b1 - b0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline const std::vector<double>& tiou_grid() {
  static const std::vector<double> g{0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
  return g;
}

/// Repeatedly takes the best remaining candidate (score, then start, then
/// length) and keeps it iff it overlaps no kept segment by more than `thr`.
inline std::vector<ScoredSegment> nms(std::vector<ScoredSegment> pool, double thr, std::size_t max_out) {
  std::vector<ScoredSegment> kept;
  while (!pool.empty() && kept.size() < max_out) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const auto& a = pool[i];
      const auto& b = pool[best];
      const auto ka = std::make_tuple(-a.score, a.start, a.end - a.start);
      const auto kb = std::make_tuple(-b.score, b.start, b.end - b.start);
      if (ka < kb) best = i;
    }
    const ScoredSegment s = pool[best];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    bool ok = true;
    for (const auto& k : kept) ok = ok && iou(s.start, s.end, k.start, k.end) <= thr;
    if (ok) kept.push_back(s);
  }
  return kept;
}

/// P(forged > genuine) + P(tie) / 2 over every forged/genuine pair.
inline double auc(const std::vector<std::pair<double, bool>>& v) {
  double num = 0.0, pairs = 0.0;
  for (const auto& a : v) {
    if (!a.second) continue;
    for (const auto& b : v) {
      if (b.second) continue;
      pairs += 1.0;
      num += a.first > b.first ? 1.0 : a.first == b.first ? 0.5 : 0.0;
    }
  }
  return num / pairs;
}

/// Number of true positives when `order` (sample, index) pairs are matched in
/// sequence, each taking the unmatched same-sample ground truth with the
/// highest IoU >= thr (lowest index on ties).
inline std::size_t match_count(const std::vector<std::pair<std::size_t, std::size_t>>& order,
                               const std::vector<std::vector<ScoredSegment>>& preds,
                               const std::vector<std::vector<Seg>>& gts, double thr) {
  std::vector<std::vector<bool>> taken;
  for (const auto& g : gts) taken.emplace_back(g.size(), false);
  std::size_t tp = 0;
  for (const auto& [s, i] : order) {
    const auto& p = preds[s][i];
    int pick = -1;
    double best = -1.0;
    for (std::size_t g = 0; g < gts[s].size(); ++g) {
      if (taken[s][g]) continue;
      const double o = iou(p.start, p.end, gts[s][g].start, gts[s][g].end);
      if (o >= thr && o > best) {
        best = o;
        pick = static_cast<int>(g);
      }
    }
    if (pick >= 0) {
      taken[s][static_cast<std::size_t>(pick)] = true;
      ++tp;
    }
  }
  return tp;
}

/// AP by re-matching every prefix of the pooled ranking from scratch; each
/// rank that adds a true positive contributes precision-at-rank / #GT.
inline double average_precision(const std::vector<std::vector<ScoredSegment>>& preds,
                                 const std::vector<std::vector<Seg>>& gts, double thr) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> keys;
  for (std::size_t s = 0; s < preds.size(); ++s)
    for (std::size_t i = 0; i < preds[s].size(); ++i) keys.emplace_back(-preds[s][i].score, s, i);
  std::sort(keys.begin(), keys.end());
  std::size_t n_gt = 0;
  for (const auto& g : gts) n_gt += g.size();
  std::vector<std::pair<std::size_t, std::size_t>> prefix;
  double ap = 0.0;
  std::size_t prev = 0;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    prefix.emplace_back(std::get<1>(keys[k]), std::get<2>(keys[k]));
    const std::size_t tp = match_count(prefix, preds, gts, thr);
    if (tp > prev) ap += (double(tp) / double(k + 1)) / double(n_gt);
    prev = tp;
  }
  return ap;
}

/// Recall of each sample's K best predictions (ties keep list order),
/// averaged over the IoU grid.
inline double average_recall(const std::vector<std::vector<ScoredSegment>>& preds,
                             const std::vector<std::vector<Seg>>& gts, std::size_t k) {
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < preds[s].size(); ++i) ranked.emplace_back(-preds[s][i].score, i);
    std::sort(ranked.begin(), ranked.end());
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) order.emplace_back(s, ranked[r].second);
  }
  std::size_t n_gt = 0;
  for (const auto& g : gts) n_gt += g.size();
  double total = 0.0;
  for (double thr : tiou_grid()) total += double(match_count(order, preds, gts, thr)) / double(n_gt);
  return total / double(tiou_grid().size());
}

// --- Random cases ------------------------------------------------------------------

struct MetricCase {
  std::vector<std::vector<ScoredSegment>> preds;
  std::vector<std::vector<Seg>> gts;
  std::vector<std::pair<double, bool>> conf;
};

/// Coarse grids for times and scores so that ties and boundary IoUs occur.
inline MetricCase random_metric_case(std::mt19937_64& rng, std::size_t max_samples = 8,
                                     std::size_t max_preds = 10, std::size_t max_gts = 5) {
  auto uni = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  MetricCase c;
  do {
    c = {};
    const std::size_t n = uni(1, max_samples);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<Seg> g;
      double t = 0.0;
      const std::size_t ng = uni(0, max_gts);
      for (std::size_t j = 0; j < ng; ++j) {
        t += 0.5 * double(uni(0, 4));
        const double len = 0.5 * double(uni(1, 6));
        g.push_back({t, t + len});
        t += len;
      }
      std::vector<ScoredSegment> p;
      const std::size_t np = uni(0, max_preds);
      for (std::size_t j = 0; j < np; ++j) {
        if (!g.empty() && uni(0, 2) == 0) {
          // Jittered copy of a ground truth so matches are common.
          const auto& src = g[uni(0, g.size() - 1)];
          const double a = src.start + 0.25 * (double(uni(0, 4)) - 2.0);
          const double b = src.end + 0.25 * (double(uni(0, 4)) - 2.0);
          if (b > a) {
            p.push_back({a, b, 0.1 * double(uni(0, 10))});
            continue;
          }
        }
        const double a = 0.5 * double(uni(0, 30));
        p.push_back({a, a + 0.5 * double(uni(1, 8)), 0.1 * double(uni(0, 10))});
      }
      c.conf.emplace_back(0.125 * double(uni(0, 8)), !g.empty());
      c.preds.push_back(std::move(p));
      c.gts.push_back(std::move(g));
    }
    std::size_t pos = 0;
    for (const auto& e : c.conf) pos += e.second;
    if (pos == 0 || pos == c.conf.size()) continue;
    break;
  } while (true);
  return c;
}

inline std::vector<ScoredSegment> random_nms_set(std::mt19937_64& rng, std::size_t max_n = 30) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::vector<ScoredSegment> v(static_cast<std::size_t>(uni(0, static_cast<int>(max_n))));
  for (auto& s : v) {
    s.start = 0.25 * uni(0, 40);
    s.end = s.start + 0.25 * uni(1, 16);
    s.score = 0.05 * uni(0, 20);
  }
  return v;
}

}  // namespace tempseg::oracle
