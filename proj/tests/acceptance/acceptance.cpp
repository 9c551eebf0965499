// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// End-to-end acceptance runner. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   tempseg_acceptance [--work DIR] [--only NAME]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "gradcheck_suite.hpp"
#include "oracles.hpp"
#include "tempseg/backbone.hpp"
#include "tempseg/detector.hpp"
#include "tempseg/featio.hpp"
#include "tempseg/infer.hpp"
#include "tempseg/metrics.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
namespace ts = tempseg::tensor;
namespace mt = tempseg::metrics;
namespace inf = tempseg::infer;
namespace orc = tempseg::oracle;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int tempseg_cli(std::vector<std::string> args, std::string* err_out = nullptr) {
  args.insert(args.begin(), "tempseg");
  std::ostringstream out, err;
  const int code = tempseg::cli::run(args, out, err);
  if (err_out) *err_out = err.str();
  if (code != 0) std::cerr << "  tempseg " << args[1] << " exited " << code << ": " << err.str();
  return code;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// --- Gradient checks ---------------------------------------------------------------

Outcome gradcheck() {
  constexpr std::size_t kSeeds = 20;
  constexpr double kTol = 1e-4, kBudget = 120.0;
  const auto t0 = Clock::now();
  const auto res = tempseg::cli::run_gradcheck_suite(kSeeds, kTol);
  const double secs = seconds_since(t0);
  std::size_t ok = 0;
  double worst = 0.0;
  std::string failed;
  for (const auto& r : res) {
    ok += r.passed;
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) failed += " " + r.name;
  }
  Outcome o;
  o.pass = ok == res.size() && !res.empty() && secs < kBudget;
  o.detail = std::to_string(ok) + "/" + std::to_string(res.size()) + " checks, max rel err " +
             fmt("%.2e", worst) + " (tol 1e-4), " + fmt("%.1f", secs) + " s (budget 120 s)" +
             (failed.empty() ? "" : "; failed:" + failed);
  return o;
}

// --- Metric oracles -------------------------------------------------------------------

Outcome metric_oracles() {
  constexpr int kCases = 1000;
  constexpr double kTol = 1e-9, kBudget = 60.0;
  std::mt19937_64 rng(20260101);
  const auto t0 = Clock::now();
  double worst = 0.0;
  int compared = 0;
  for (int i = 0; i < kCases; ++i) {
    const auto c = orc::random_metric_case(rng, 8, 10, 5);
    worst = std::max(worst, std::abs(mt::roc_auc(c.conf) - orc::auc(c.conf)));
    std::size_t n_gt = 0;
    for (const auto& g : c.gts) n_gt += g.size();
    if (n_gt == 0) continue;
    for (double thr : mt::kApThresholds)
      worst = std::max(worst, std::abs(mt::average_precision(c.preds, c.gts, thr) -
                                       orc::average_precision(c.preds, c.gts, thr)));
    for (std::size_t k : mt::kArTopK)
      worst = std::max(worst, std::abs(mt::average_recall_at_k(c.preds, c.gts, k) -
                                       orc::average_recall(c.preds, c.gts, k)));
    ++compared;
  }
  const double secs = seconds_since(t0);
  return {worst <= kTol && secs < kBudget,
          std::to_string(kCases) + " random cases (" + std::to_string(compared) +
              " with AP/AR), max |diff| " + fmt("%.1e", worst) + " (tol 1e-9), " + fmt("%.2f", secs) +
              " s (budget 60 s)"};
}

// --- Scoring exactness -----------------------------------------------------------------

Outcome scoring_exactness() {
  std::mt19937_64 rng(7);
  std::vector<tempseg::featio::Annotation> gt;
  for (int i = 0; i < 12; ++i) {
    tempseg::featio::Annotation a{"s" + std::to_string(i), 10.0, {}};
    double t = 0.0;
    const int n = i % 2 ? 0 : 1 + i % 3;
    for (int j = 0; j < n; ++j) {
      t += 0.5 + 0.25 * double(rng() % 4);
      a.segments.push_back({t, t + 0.75});
      t += 0.75;
    }
    gt.push_back(a);
  }
  std::vector<inf::PredictionRecord> perfect, no_segments;
  for (const auto& g : gt) {
    inf::PredictionRecord p{g.id, g.segments.empty() ? 0.1 : 0.9, {}};
    no_segments.push_back(p);
    for (const auto& s : g.segments) p.segments.push_back({s.start, s.end, 0.9});
    perfect.push_back(p);
  }
  const auto a = mt::evaluate(perfect, gt);
  const auto b = mt::evaluate(no_segments, gt);
  const bool pass = a.score == 1.0 && a.final_score == 1.0 && b.auc == 1.0 && b.score == 0.0 &&
                    b.final_score == 0.5;
  return {pass, "perfect: Score=" + fmt("%.17g", a.score) + " FinalScore=" + fmt("%.17g", a.final_score) +
                    "; AUC=1 with no segments: Score=" + fmt("%.17g", b.score) +
                    " FinalScore=" + fmt("%.17g", b.final_score)};
}

// --- NMS -----------------------------------------------------------------------------------

Outcome nms() {
  constexpr int kSets = 10000;
  std::mt19937_64 rng(99);
  int bad_subset = 0, bad_sep = 0, bad_idem = 0, bad_ref = 0;
  for (int i = 0; i < kSets; ++i) {
    const auto set = orc::random_nms_set(rng, 40);
    const double thr = 0.05 * double(rng() % 21);
    const std::size_t cap = 1 + rng() % 50;
    const auto kept = inf::nms(set, thr, cap);
    for (const auto& k : kept)
      if (std::find(set.begin(), set.end(), k) == set.end()) ++bad_subset;
    for (std::size_t a = 0; a < kept.size(); ++a)
      for (std::size_t b = a + 1; b < kept.size(); ++b)
        if (orc::iou(kept[a].start, kept[a].end, kept[b].start, kept[b].end) > thr) ++bad_sep;
    if (inf::nms(kept, thr, cap) != kept) ++bad_idem;
    if (kept != orc::nms(set, thr, cap)) ++bad_ref;
  }
  return {bad_subset + bad_sep + bad_idem + bad_ref == 0,
          std::to_string(kSets) + " random sets; violations: subset " + std::to_string(bad_subset) +
              ", overlap " + std::to_string(bad_sep) + ", idempotence " + std::to_string(bad_idem) +
              ", reference mismatch " + std::to_string(bad_ref)};
}

// --- Mask and locality -------------------------------------------------------------------

Outcome mask_locality() {
  constexpr int kTrials = 100;
  tempseg::ModelConfig mc;
  mc.input_dim = 6;
  mc.model_dim = 8;
  mc.n_blocks = 3;
  mc.n_levels = 3;
  mc.window_size = 3;
  mc.n_heads = 2;
  mc.max_len = 32;
  tempseg::Detector<double> det(mc);
  std::mt19937_64 rng(5);
  int pad_fail = 0, local_fail = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    tempseg::testing::randomize_parameters(det.parameters(), 1000 + trial, 0.4);
    const std::size_t B = 1 + rng() % 3, T = 4 + rng() % 29;
    ts::Mask mask(B * T, 0);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t valid = 1 + rng() % T;
      for (std::size_t t = 0; t < valid; ++t) mask[b * T + t] = 1;
    }
    auto xv = tempseg::testing::normal_values(rng, B * T * mc.input_dim);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (!mask[i / mc.input_dim]) xv[i] = 0.0;
    const auto a = det.forward(ts::Tensor<double>::constant({B, T, mc.input_dim}, xv), mask);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (!mask[i / mc.input_dim]) xv[i] = 1e3 * std::cos(double(i * 7 + trial));
    const auto b = det.forward(ts::Tensor<double>::constant({B, T, mc.input_dim}, xv), mask);
    bool same = true;
    for (std::size_t l = 0; l < a.cls.size(); ++l) {
      const auto& m = a.pyramid.masks[l];
      const std::size_t C = mc.model_dim;
      for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t c = 0; c < C; ++c) {
          const double va = a.pyramid.levels[l].data()[i * C + c], vb = b.pyramid.levels[l].data()[i * C + c];
          same = same && va == vb && (m[i] || va == 0.0);
        }
        if (!m[i]) continue;
        same = same && a.cls[l].data()[i] == b.cls[l].data()[i] &&
               a.reg[l].data()[2 * i] == b.reg[l].data()[2 * i] &&
               a.reg[l].data()[2 * i + 1] == b.reg[l].data()[2 * i + 1];
      }
    }
    pad_fail += !same;
  }

  // A change at one position leaves attention outputs outside its window untouched.
  std::mt19937_64 prng(6);
  const std::size_t C = 8, W = 5;
  auto rt = [&](ts::Shape s) { return tempseg::testing::random_tensor<double>(prng, std::move(s), 0.5); };
  const tempseg::backbone::AttentionParams<double> p{rt({C, C}), rt({C}), rt({C, C}), rt({C}),
                                                     rt({C, C}), rt({C}), rt({C, C}), rt({C})};
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t T = 6 + prng() % 20;
    ts::Mask mask(T, 1);
    for (std::size_t t = 0; t < T; ++t) mask[t] = prng() % 5 != 0;
    auto xv = tempseg::testing::normal_values(prng, T * C);
    const auto y0 = tempseg::backbone::local_attention(ts::Tensor<double>::constant({1, T, C}, xv), mask, p, 2, W);
    const std::size_t pos = prng() % T;
    for (std::size_t c = 0; c < C; ++c) xv[pos * C + c] += 5.0;
    const auto y1 = tempseg::backbone::local_attention(ts::Tensor<double>::constant({1, T, C}, xv), mask, p, 2, W);
    bool same = true;
    for (std::size_t t = 0; t < T; ++t) {
      if ((t > pos ? t - pos : pos - t) <= W / 2) continue;
      for (std::size_t c = 0; c < C; ++c) same = same && y0.data()[t * C + c] == y1.data()[t * C + c];
    }
    local_fail += !same;
  }
  return {pad_fail == 0 && local_fail == 0,
          std::to_string(kTrials) + " padding trials (" + std::to_string(pad_fail) + " differ), " +
              std::to_string(kTrials) + " window-locality trials (" + std::to_string(local_fail) +
              " differ), bitwise"};
}

// --- Desk learning and reproducibility ---------------------------------------------------------

const char* kDeskConfig =
    "input_dim=16\nmodel_dim=32\nn_blocks=4\nn_levels=3\nwindow_size=9\nn_heads=4\n"
    "downsample_stride=4\nM_max=256\nregression_ranges=8,32\n"
    "lr0=0.003\nwarmup_epochs=2\nepochs=15\nbatch_size=8\ndeterministic=true\n";

struct DeskRun {
  bool ok = false;
  double train_ap = 0.0, test_ap = 0.0, test_auc = 0.0;
};

mt::MetricsReport score(const fs::path& pred, const fs::path& ann) {
  return mt::evaluate(inf::read_predictions(pred), tempseg::featio::read_annotations(ann));
}

DeskRun desk_seed(const fs::path& work, int seed) {
  DeskRun r;
  const fs::path dir = work / ("desk_" + std::to_string(seed));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string train = (dir / "train").string(), test = (dir / "test").string();
  if (tempseg_cli({"synth", "--out", train, "--n", "200", "--seed", std::to_string(seed)}) ||
      tempseg_cli({"synth", "--out", test, "--n", "50", "--seed", std::to_string(1000 + seed)})) {
    return r;
  }
  std::ofstream(dir / "desk.txt") << kDeskConfig;
  const std::string model = (dir / "model").string();
  if (tempseg_cli({"train", "--config", (dir / "desk.txt").string(), "--data", train + "/manifest.json",
                   "--out", model, "--set", "seed=" + std::to_string(seed), "--quiet"}) ||
      tempseg_cli({"infer", "--model", model + "/final.tpk", "--features", train + "/manifest.json", "--out",
                   (dir / "pred_train.jsonl").string()}) ||
      tempseg_cli({"infer", "--model", model + "/final.tpk", "--features", test + "/manifest.json", "--out",
                   (dir / "pred_test.jsonl").string()})) {
    return r;
  }
  const auto tr = score(dir / "pred_train.jsonl", train + "/annotations.jsonl");
  const auto te = score(dir / "pred_test.jsonl", test + "/annotations.jsonl");
  r.train_ap = tr.ap[0];
  r.test_ap = te.ap[0];
  r.test_auc = te.auc;
  r.ok = r.train_ap >= 0.9 && r.test_ap >= 0.7 && r.test_auc >= 0.9;
  return r;
}

Outcome desk_learning(const fs::path& work) {
  constexpr int kSeeds = 5, kNeeded = 4;
  constexpr double kBudget = 600.0;
  const auto t0 = Clock::now();
  int passed = 0;
  std::string detail;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto r = desk_seed(work, seed);
    passed += r.ok;
    detail += " [seed " + std::to_string(seed) + " train AP@.5 " + fmt("%.3f", r.train_ap) + " test AP@.5 " +
              fmt("%.3f", r.test_ap) + " AUC " + fmt("%.3f", r.test_auc) + (r.ok ? "]" : " miss]");
  }
  const double secs = seconds_since(t0);
  return {passed >= kNeeded && secs < kBudget,
          std::to_string(passed) + "/" + std::to_string(kSeeds) + " seeds meet train AP@.5>=0.9, test AP@.5>=0.7, " +
              "AUC>=0.9 (need 4), " + fmt("%.0f", secs) + " s (budget 600 s);" + detail};
}

Outcome reproducibility(const fs::path& work) {
  const fs::path dir = work / "repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = (dir / "data").string();
  if (tempseg_cli({"synth", "--out", data, "--n", "200", "--seed", "42"})) return {false, "synth failed"};
  std::ofstream(dir / "desk.txt") << kDeskConfig;
  for (const char* run : {"a", "b"}) {
    if (tempseg_cli({"train", "--config", (dir / "desk.txt").string(), "--data", data + "/manifest.json", "--out",
                     (dir / run).string(), "--deterministic", "--quiet"})) {
      return {false, std::string("train run ") + run + " failed"};
    }
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const auto name = e.path().filename().string();
    if (e.path().extension() != ".tpk" && name != "loss.csv") continue;
    ++files;
    if (tempseg::testing::read_file(e.path()) != tempseg::testing::read_file(dir / "b" / name)) ++differ;
  }
  return {files >= 17 && differ == 0, std::to_string(files) + " files (per-epoch checkpoints, final.tpk, loss.csv) "
                                          "compared across two deterministic train runs, " +
                                          std::to_string(differ) + " differ"};
}

// --- Fusion ------------------------------------------------------------------------------------

Outcome fusion(const fs::path& work) {
  // Properties on random records.
  std::mt19937_64 rng(11);
  int prop_fail = 0;
  for (int i = 0; i < 2000; ++i) {
    inf::PredictionRecord a{"x", 0.0, orc::random_nms_set(rng, 8)}, v{"x", 0.0, orc::random_nms_set(rng, 8)};
    a.confidence = inf::sequence_confidence(a.segments);
    v.confidence = inf::sequence_confidence(v.segments);
    const auto f = inf::fuse_modalities(a, v);
    bool ok = f.confidence == std::max(a.confidence, v.confidence) &&
              f.segments.size() == a.segments.size() + v.segments.size();
    std::size_t from_audio = 0, from_video = 0;
    for (const auto& s : f.segments) {
      const auto& src = s.modality == tempseg::featio::Modality::kAudio ? a.segments : v.segments;
      (s.modality == tempseg::featio::Modality::kAudio ? from_audio : from_video) += 1;
      ok = ok && std::any_of(src.begin(), src.end(), [&](const auto& t) {
             return t.start == s.start && t.end == s.end && t.score == s.score;
           });
    }
    ok = ok && from_audio == a.segments.size() && from_video == v.segments.size();
    prop_fail += !ok;
  }

  // CLI path: two modalities sharing ids, fused and scored against the union
  // of their ground truth.
  const fs::path dir = work / "fusion";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string da = (dir / "audio").string(), dv = (dir / "video").string();
  if (tempseg_cli({"synth", "--out", da, "--n", "30", "--seed", "501", "--dim", "16"}) ||
      tempseg_cli({"synth", "--out", dv, "--n", "30", "--seed", "502", "--dim", "16"})) {
    return {false, "synth failed"};
  }
  tempseg::ModelConfig mc;
  mc.input_dim = 16;
  mc.model_dim = 16;
  mc.n_blocks = 3;
  mc.n_levels = 3;
  mc.n_heads = 2;
  mc.downsample_stride = 4;
  mc.max_len = 256;
  tempseg::Detector<float> det(mc);
  det.initialize(3);
  tempseg::testing::randomize_parameters(det.parameters(), 3, 0.3);
  const fs::path model = dir / "model";
  fs::create_directories(model);
  det.save(model / "final.tpk");
  std::ofstream(model / "config.txt")
      << "input_dim=16\nmodel_dim=16\nn_blocks=3\nn_levels=3\nn_heads=2\ndownsample_stride=4\nM_max=256\n"
         "pre_nms_threshold=0.05\n";
  const std::string pa = (dir / "pa.jsonl").string(), pv = (dir / "pv.jsonl").string(),
                    pf = (dir / "pf.jsonl").string(), rep = (dir / "report.json").string();
  if (tempseg_cli({"infer", "--model", (model / "final.tpk").string(), "--features", da + "/manifest.json", "--out", pa}) ||
      tempseg_cli({"infer", "--model", (model / "final.tpk").string(), "--features", dv + "/manifest.json", "--out", pv}) ||
      tempseg_cli({"fuse", "--audio-pred", pa, "--video-pred", pv, "--out", pf}) ||
      tempseg_cli({"eval", "--pred", pf, "--gt", da + "/annotations.jsonl", "--gt", dv + "/annotations.jsonl",
                   "--out", rep})) {
    return {false, "CLI pipeline failed"};
  }
  const auto manual_preds = inf::fuse_predictions(inf::read_predictions(pa), inf::read_predictions(pv));
  const auto manual_gt = mt::merge_annotations({tempseg::featio::read_annotations(da + "/annotations.jsonl"),
                                                tempseg::featio::read_annotations(dv + "/annotations.jsonl")});
  const auto manual = mt::evaluate(manual_preds, manual_gt);
  const bool file_match = inf::read_predictions(pf) == manual_preds;
  const auto j = nlohmann::json::parse(tempseg::testing::read_file(rep));
  bool report_match = j["auc"].get<double>() == manual.auc && j["score"].get<double>() == manual.score &&
                      j["final_score"].get<double>() == manual.final_score;
  for (std::size_t i = 0; i < 4; ++i) {
    char key[16];
    std::snprintf(key, sizeof(key), "%.2f", mt::kApThresholds[i]);
    report_match = report_match && j["ap"][key].get<double>() == manual.ap[i] &&
                   j["ar"][std::to_string(mt::kArTopK[i])].get<double>() == manual.ar[i];
  }
  return {prop_fail == 0 && file_match && report_match,
          "2000 property trials (" + std::to_string(prop_fail) + " violations); fuse->eval vs manual fusion: " +
              (file_match ? "records equal" : "records DIFFER") + ", " +
              (report_match ? "reports equal" : "reports DIFFER") + " (FinalScore " +
              fmt("%.6f", manual.final_score) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "tempseg_acceptance";
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: tempseg_acceptance [--work DIR] [--only NAME]\n";
      return 1;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradcheck", gradcheck},
      {"metric-oracles", metric_oracles},
      {"scoring-exactness", scoring_exactness},
      {"nms", nms},
      {"mask-locality", mask_locality},
      {"desk-learning", [&] { return desk_learning(work); }},
      {"reproducibility", [&] { return reproducibility(work); }},
      {"fusion", [&] { return fusion(work); }},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && name != only) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
