// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <numeric>

#include "tempseg/error.hpp"
#include "tempseg/loss.hpp"

namespace tempseg::metrics {

namespace {

std::size_t count_gt(const std::vector<featio::SegmentSet>& gts) {
  std::size_t n = 0;
  for (const auto& g : gts) n += g.size();
  return n;
}

/// Index of the unmatched GT with the highest IoU >= tiou, or -1.
long best_match(const ScoredSegment& p, const featio::SegmentSet& gt,
                const std::vector<char>& used, double tiou) {
  long best = -1;
  double best_iou = -1.0;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (used[g]) continue;
    const double iou = loss::temporal_iou({p.start, p.end}, gt[g]);
    if (iou >= tiou && iou > best_iou) {
      best_iou = iou;
      best = static_cast<long>(g);
    }
  }
  return best;
}

/// Per-sample list order sorted by score descending, stable on ties.
std::vector<std::size_t> rank_within(const SamplePredictions& p) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return p[a].score > p[b].score; });
  return idx;
}

void check_sizes(const std::vector<SamplePredictions>& preds,
                 const std::vector<featio::SegmentSet>& gts) {
  if (preds.size() != gts.size()) {
    throw InvalidArgument("metrics: " + std::to_string(preds.size()) + " prediction lists vs " +
                          std::to_string(gts.size()) + " ground-truth lists");
  }
}

}  // namespace

std::vector<double> recall_iou_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) g.push_back((50 + 5 * i) / 100.0);
  return g;
}

double roc_auc(const std::vector<std::pair<double, bool>>& pairs) {
  std::vector<std::pair<double, bool>> v = pairs;
  std::size_t pos = 0;
  for (const auto& [c, y] : v) pos += y;
  const std::size_t neg = v.size() - pos;
  if (pos == 0 || neg == 0) {
    throw InvalidArgument("AUC undefined: need both forged and genuine samples (got " +
                          std::to_string(pos) + " forged, " + std::to_string(neg) + " genuine)");
  }
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Each forged sample earns 1 per genuine below it and 1/2 per tied genuine.
  double wins = 0.0;
  std::size_t neg_below = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i, p_tie = 0, n_tie = 0;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? p_tie : n_tie) += 1;
      ++j;
    }
    wins += static_cast<double>(p_tie) * (static_cast<double>(neg_below) + 0.5 * n_tie);
    neg_below += n_tie;
    i = j;
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(const std::vector<SamplePredictions>& preds,
                         const std::vector<featio::SegmentSet>& gts, double tiou) {
  check_sizes(preds, gts);
  const std::size_t n_gt = count_gt(gts);
  if (n_gt == 0) throw InvalidArgument("AP undefined: no ground-truth segments");

  struct Ref {
    double score;
    std::size_t sample, index;
  };
  std::vector<Ref> pooled;
  for (std::size_t s = 0; s < preds.size(); ++s)
    for (std::size_t i = 0; i < preds[s].size(); ++i) pooled.push_back({preds[s][i].score, s, i});
  std::sort(pooled.begin(), pooled.end(), [](const Ref& a, const Ref& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.sample != b.sample) return a.sample < b.sample;
    return a.index < b.index;
  });

  std::vector<std::vector<char>> used(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].size(), 0);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < pooled.size(); ++r) {
    const Ref& ref = pooled[r];
    const long g = best_match(preds[ref.sample][ref.index], gts[ref.sample], used[ref.sample], tiou);
    if (g < 0) continue;
    used[ref.sample][static_cast<std::size_t>(g)] = 1;
    ++tp;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_gt);
    const double precision = static_cast<double>(tp) / static_cast<double>(r + 1);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double average_recall_at_k(const std::vector<SamplePredictions>& preds,
                           const std::vector<featio::SegmentSet>& gts, std::size_t k,
                           const std::vector<double>& grid) {
  check_sizes(preds, gts);
  const std::size_t n_gt = count_gt(gts);
  if (n_gt == 0) throw InvalidArgument("AR undefined: no ground-truth segments");
  if (grid.empty()) throw InvalidArgument("AR: empty IoU grid");
  std::vector<std::vector<std::size_t>> order(preds.size());
  for (std::size_t s = 0; s < preds.size(); ++s) {
    order[s] = rank_within(preds[s]);
    if (order[s].size() > k) order[s].resize(k);
  }
  double sum = 0.0;
  for (const double tiou : grid) {
    std::size_t matched = 0;
    for (std::size_t s = 0; s < preds.size(); ++s) {
      std::vector<char> used(gts[s].size(), 0);
      for (const std::size_t i : order[s]) {
        const long g = best_match(preds[s][i], gts[s], used, tiou);
        if (g < 0) continue;
        used[static_cast<std::size_t>(g)] = 1;
        ++matched;
      }
    }
    sum += static_cast<double>(matched) / static_cast<double>(n_gt);
  }
  return sum / static_cast<double>(grid.size());
}

MetricsReport final_score(MetricsReport r) {
  double weighted = 0.0;
  for (std::size_t i = 0; i < 4; ++i) weighted += kApWeights[i] * r.ap[i] + kArWeights[i] * r.ar[i];
  r.score = weighted / kWeightDenominator;
  r.final_score = (r.auc + r.score) / 2.0;
  return r;
}

std::vector<featio::Annotation> merge_annotations(
    const std::vector<std::vector<featio::Annotation>>& sets) {
  std::vector<featio::Annotation> out;
  std::map<std::string, std::size_t> index;
  for (const auto& set : sets) {
    for (const auto& a : set) {
      const auto [it, fresh] = index.emplace(a.id, out.size());
      if (fresh) {
        out.push_back(a);
        continue;
      }
      auto& m = out[it->second];
      m.duration = std::max(m.duration, a.duration);
      m.segments.insert(m.segments.end(), a.segments.begin(), a.segments.end());
    }
  }
  for (auto& m : out) {
    std::sort(m.segments.begin(), m.segments.end(), [](const auto& x, const auto& y) {
      return x.start != y.start ? x.start < y.start : x.end < y.end;
    });
    m.segments.erase(std::unique(m.segments.begin(), m.segments.end()), m.segments.end());
  }
  return out;
}

MetricsReport evaluate(const std::vector<infer::PredictionRecord>& preds,
                       const std::vector<featio::Annotation>& gts) {
  std::map<std::string, const infer::PredictionRecord*> by_id;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.id, &p).second) throw FormatError("duplicate prediction id " + p.id);
  }
  std::vector<std::string> missing;
  std::map<std::string, bool> in_gt;
  std::vector<SamplePredictions> sp;
  std::vector<featio::SegmentSet> sg;
  std::vector<std::pair<double, bool>> conf;
  for (const auto& g : gts) {
    in_gt[g.id] = true;
    const auto it = by_id.find(g.id);
    if (it == by_id.end()) {
      missing.push_back(g.id + " (no prediction)");
      continue;
    }
    sp.push_back(it->second->segments);
    sg.push_back(g.segments);
    conf.emplace_back(it->second->confidence, !g.segments.empty());
  }
  for (const auto& p : preds) {
    if (!in_gt.count(p.id)) missing.push_back(p.id + " (no ground truth)");
  }
  if (!missing.empty()) {
    std::string msg = "prediction and ground-truth ids differ:";
    for (const auto& m : missing) msg += " " + m;
    throw FormatError(msg);
  }
  MetricsReport r;
  r.auc = roc_auc(conf);
  for (std::size_t i = 0; i < kApThresholds.size(); ++i) r.ap[i] = average_precision(sp, sg, kApThresholds[i]);
  for (std::size_t i = 0; i < kArTopK.size(); ++i) r.ar[i] = average_recall_at_k(sp, sg, kArTopK[i]);
  return final_score(r);
}

std::string report_json(const MetricsReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["auc"] = r.auc;
  ordered_json ap, ar, w_ap, w_ar;
  char key[16];
  for (std::size_t i = 0; i < 4; ++i) {
    std::snprintf(key, sizeof(key), "%.2f", kApThresholds[i]);
    ap[key] = r.ap[i];
    w_ap[key] = kApWeights[i];
    ar[std::to_string(kArTopK[i])] = r.ar[i];
    w_ar[std::to_string(kArTopK[i])] = kArWeights[i];
  }
  j["ap"] = ap;
  j["ar"] = ar;
  j["score"] = r.score;
  j["final_score"] = r.final_score;
  j["weights"] = {{"ap", w_ap}, {"ar", w_ar}, {"denominator", kWeightDenominator}};
  return j.dump(2) + "\n";
}

std::string report_csv_header() {
  return "AP@0.5,AP@0.75,AP@0.9,AP@0.95,AR@30,AR@20,AR@10,AR@5,AUC,Score,FinalScore\n";
}

std::string report_csv_row(const MetricsReport& r) {
  std::string out;
  char buf[32];
  auto put = [&](double v, bool last) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    out += buf;
    out += last ? "\n" : ",";
  };
  for (double v : r.ap) put(v, false);
  for (double v : r.ar) put(v, false);
  put(r.auc, false);
  put(r.score, false);
  put(r.final_score, true);
  return out;
}

}  // namespace tempseg::metrics
