// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/infer.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <map>

#include "tempseg/error.hpp"
#include "tempseg/loss.hpp"

namespace tempseg::infer {

using nlohmann::json;

void InferConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(pre_nms_threshold) || !unit(nms_iou)) {
    throw InvalidArgument("infer config: thresholds must lie in [0, 1]");
  }
  if (pre_nms_topk < max_outputs) throw InvalidArgument("infer config: pre_nms_topk < max_outputs");
}

bool ranks_before(const ScoredSegment& a, const ScoredSegment& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return (a.end - a.start) < (b.end - b.start);
}

std::vector<ScoredSegment> propose(const Detector<float>& model, const featio::FeatureSequence& seq,
                                   const InferConfig& cfg, heads::DecodeStats* stats) {
  const ModelConfig& mc = model.config();
  if (seq.valid_len == 0) throw InvalidArgument("propose: empty sequence " + seq.id);
  if (seq.dim != mc.input_dim) {
    throw FormatError("propose: " + seq.id + " has dim " + std::to_string(seq.dim) +
                      ", model expects " + std::to_string(mc.input_dim));
  }
  // Whole sequence in one pass; only pad up to the coarsest level's minimum.
  std::size_t min_len = 1;
  for (std::size_t l = 1; l < mc.n_levels; ++l) min_len *= mc.downsample_stride;
  const auto batch = make_batch<float>({&seq}, std::max(seq.valid_len, min_len));
  const auto out = model.forward(batch.x, batch.mask);

  const double duration = seq.duration_sec();
  std::vector<ScoredSegment> cands;
  for (std::size_t l = 0; l < out.cls.size(); ++l) {
    const auto p = out.cls[l].data();
    const auto d = out.reg[l].data();
    const auto& mask = out.pyramid.masks[l];
    for (std::size_t tau = 0; tau < p.size(); ++tau) {
      if (!mask[tau] || p[tau] < cfg.pre_nms_threshold) continue;
      const heads::TimestepPrediction tp{l, tau, p[tau], d[2 * tau], d[2 * tau + 1]};
      if (auto s = heads::decode_span(tp, out.pyramid.strides, seq.feature_fps, duration, stats)) {
        s->modality = seq.modality;
        cands.push_back(*s);
      }
    }
  }
  std::stable_sort(cands.begin(), cands.end(), ranks_before);
  if (cands.size() > cfg.pre_nms_topk) cands.resize(cfg.pre_nms_topk);
  return cands;
}

std::vector<ScoredSegment> nms(std::vector<ScoredSegment> segments, double iou_threshold,
                               std::size_t max_outputs) {
  std::stable_sort(segments.begin(), segments.end(), ranks_before);
  std::vector<ScoredSegment> kept;
  for (const auto& s : segments) {
    if (kept.size() >= max_outputs) break;
    const bool keep = std::all_of(kept.begin(), kept.end(), [&](const ScoredSegment& k) {
      return loss::temporal_iou({s.start, s.end}, {k.start, k.end}) <= iou_threshold;
    });
    if (keep) kept.push_back(s);
  }
  return kept;
}

double sequence_confidence(const std::vector<ScoredSegment>& kept) {
  double c = 0.0;
  for (const auto& s : kept) c = std::max(c, s.score);
  return c;
}

PredictionRecord predict(const Detector<float>& model, const featio::FeatureSequence& seq,
                         const InferConfig& cfg, heads::DecodeStats* stats) {
  PredictionRecord r;
  r.id = seq.id;
  r.segments = nms(propose(model, seq, cfg, stats), cfg.nms_iou, cfg.max_outputs);
  r.confidence = sequence_confidence(r.segments);
  return r;
}

PredictionRecord fuse_modalities(const PredictionRecord& audio, const PredictionRecord& video) {
  if (audio.id != video.id) {
    throw InvalidArgument("fuse: id mismatch " + audio.id + " vs " + video.id);
  }
  PredictionRecord r;
  r.id = audio.id;
  r.confidence = std::max(audio.confidence, video.confidence);
  for (auto s : audio.segments) {
    s.modality = featio::Modality::kAudio;
    r.segments.push_back(s);
  }
  for (auto s : video.segments) {
    s.modality = featio::Modality::kVideo;
    r.segments.push_back(s);
  }
  return r;
}

std::vector<PredictionRecord> fuse_predictions(const std::vector<PredictionRecord>& audio,
                                               const std::vector<PredictionRecord>& video) {
  std::map<std::string, const PredictionRecord*> by_id;
  for (const auto& v : video) by_id.emplace(v.id, &v);
  std::vector<std::string> missing;
  std::vector<PredictionRecord> out;
  std::map<std::string, bool> seen;
  for (const auto& a : audio) {
    const auto it = by_id.find(a.id);
    if (it == by_id.end()) {
      missing.push_back(a.id + " (audio only)");
      continue;
    }
    seen[a.id] = true;
    out.push_back(fuse_modalities(a, *it->second));
  }
  for (const auto& v : video) {
    if (!seen.count(v.id)) missing.push_back(v.id + " (video only)");
  }
  if (!missing.empty()) {
    std::string msg = "fuse: ids not present in both prediction sets:";
    for (const auto& m : missing) msg += " " + m;
    throw FormatError(msg);
  }
  return out;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open predictions " + path.string());
  std::vector<PredictionRecord> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      PredictionRecord r;
      r.id = j.at("id").get<std::string>();
      r.confidence = j.at("confidence").get<double>();
      for (const auto& s : j.at("segments")) {
        ScoredSegment seg;
        seg.start = s.at("start").get<double>();
        seg.end = s.at("end").get<double>();
        seg.score = s.at("score").get<double>();
        seg.modality = featio::parse_modality(s.value("modality", std::string("synthetic")));
        if (!(seg.end > seg.start)) throw FormatError(ctx + ": segment end must exceed start");
        if (!(seg.score >= 0.0 && seg.score <= 1.0)) throw FormatError(ctx + ": score outside [0, 1]");
        r.segments.push_back(seg);
      }
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(ctx + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw FormatError(ctx + ": " + e.what());
    }
  }
  return rows;
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& r : rows) {
    json segs = json::array();
    for (const auto& s : r.segments) {
      segs.push_back({{"start", s.start},
                      {"end", s.end},
                      {"score", s.score},
                      {"modality", std::string(featio::modality_name(s.modality))}});
    }
    f << json{{"id", r.id}, {"confidence", r.confidence}, {"segments", segs}}.dump() << '\n';
  }
}

}  // namespace tempseg::infer
