// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "cli.hpp"
#include "gradcheck_suite.hpp"
#include "tempseg/config.hpp"
#include "tempseg/detector.hpp"
#include "tempseg/error.hpp"
#include "tempseg/featio.hpp"
#include "tempseg/infer.hpp"
#include "tempseg/metrics.hpp"
#include "tempseg/tensor.hpp"
#include "tempseg/trainer.hpp"

namespace tempseg::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string hex(const unsigned char* d, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s += digits[d[i] >> 4];
    s += digits[d[i] & 15];
  }
  return s;
}

std::string sha1(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  if (EVP_Digest(data.data(), data.size(), md, &n, EVP_sha1(), nullptr) != 1) {
    throw FormatError("sha1 failed");
  }
  return hex(md, n);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + p.string() + " for writing");
  f << text;
  if (!f) throw FormatError("write failed: " + p.string());
}

ordered_json config_json(const config::RunConfig& cfg) {
  ordered_json j = ordered_json::object();
  const std::string text = config::to_text(cfg);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

/// Written next to every artifact; contains no timestamps so reruns match.
void write_run_manifest(const fs::path& path, const std::string& command,
                        const std::vector<std::string>& args, const config::RunConfig* cfg,
                        const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  ordered_json j;
  j["tool"] = "tempseg";
  j["version"] = kVersion;
  j["command"] = command;
  j["arguments"] = args;
  if (cfg) {
    j["config"] = config_json(*cfg);
    j["seed"] = cfg->train.seed;
    j["deterministic"] = cfg->train.deterministic;
  }
  ordered_json in = ordered_json::array();
  for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"blob", git_blob_hash(p)}});
  j["inputs"] = in;
  j["input_hash"] = combined_hash(inputs);
  ordered_json out = ordered_json::array();
  for (const auto& p : outputs) out.push_back(p.string());
  j["outputs"] = out;
  write_text(path, j.dump(2) + "\n");
}

fs::path sidecar(const fs::path& artifact) { return fs::path(artifact.string() + ".manifest.json"); }

config::RunConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  config::RunConfig cfg = path.empty() ? config::RunConfig{} : config::load_config(path);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got " + s);
    config::set_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

/// A manifest (.json) or a single feature file.
std::vector<fs::path> feature_paths(const fs::path& p) {
  if (p.extension() != ".json") return {p};
  std::vector<fs::path> out;
  for (const auto& row : featio::read_manifest(p)) {
    fs::path f = row.features;
    if (f.is_relative()) f = p.parent_path() / f;
    out.push_back(f);
  }
  return out;
}

// --- Subcommands -------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t n = 200;
  std::uint64_t seed = 0;
  std::size_t dim = 16;
  double fps = 25.0;
  double duration = 10.0;
  double shift = 1.5;
  double genuine_fraction = 0.5;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  featio::SynthDatasetConfig dc;
  dc.count = a.n;
  dc.seed = a.seed;
  dc.genuine_fraction = a.genuine_fraction;
  dc.sample.dim = a.dim;
  dc.sample.feature_fps = a.fps;
  dc.sample.duration_sec = a.duration;
  dc.sample.shift_magnitude = a.shift;
  featio::write_synth_dataset(a.out, dc);
  const fs::path dir = a.out;
  write_run_manifest(dir / "run_manifest.json", "synth", argv, nullptr, {},
                     {dir / "manifest.json", dir / "annotations.jsonl", dir / "features"});
  out << "wrote " << a.n << " samples to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string annotations;
  std::string out;
  std::vector<std::string> sets;
  bool deterministic = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  config::RunConfig cfg = resolve_config(a.config, a.sets);
  if (a.deterministic || trainer::deterministic_from_env()) {
    cfg.train.deterministic = true;
    cfg.train.workers = 1;
  }
  const auto ann = a.annotations.empty() ? std::optional<fs::path>{} : std::optional<fs::path>{a.annotations};
  const auto ds = featio::load_dataset(a.data, ann);
  const auto data = trainer::load_training_set(ds, cfg.train.modality);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_text(dir / "config.txt", config::to_text(cfg));

  Detector<float> model(cfg.model);
  trainer::TrainOptions opt;
  opt.out_dir = dir;
  const auto result = trainer::train(model, data, cfg.train, cfg.loss, opt);
  if (!a.quiet) {
    for (const auto& e : result.epochs) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "epoch %3zu  step %6zu  lr %.3e  total %.5f  cls %.5f  reg %.5f\n",
                    e.epoch, e.step, e.lr, e.total, e.cls, e.reg);
      out << buf;
    }
  }
  if (result.skipped_steps) out << "skipped " << result.skipped_steps << " non-finite steps\n";

  std::vector<fs::path> inputs{a.data, ann.value_or(fs::path(a.data).parent_path() / "annotations.jsonl")};
  if (!a.config.empty()) inputs.insert(inputs.begin(), a.config);
  for (const auto& e : ds.entries) inputs.push_back(e.feature_path);
  std::vector<fs::path> outputs{dir / "config.txt", dir / "loss.csv", dir / "final.tpk"};
  for (std::size_t e = 1; e <= cfg.train.epochs; ++e) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03zu.tpk", e);
    outputs.push_back(dir / name);
  }
  write_run_manifest(dir / "run_manifest.json", "train", argv, &cfg, inputs, outputs);
  return kExitOk;
}

struct InferArgs {
  std::string model;
  std::string config;
  std::string features;
  std::string out;
  std::vector<std::string> sets;
};

int cmd_infer(const InferArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const fs::path cfg_path = a.config.empty() ? fs::path(a.model).parent_path() / "config.txt" : fs::path(a.config);
  const config::RunConfig cfg = resolve_config(cfg_path.string(), a.sets);
  Detector<float> model(cfg.model);
  model.load(a.model);

  std::vector<infer::PredictionRecord> rows;
  heads::DecodeStats stats;
  const auto paths = feature_paths(a.features);
  for (const auto& p : paths) rows.push_back(infer::predict(model, featio::load_features(p), cfg.infer, &stats));
  infer::write_predictions(a.out, rows);

  std::vector<fs::path> inputs{a.model, cfg_path};
  inputs.insert(inputs.end(), paths.begin(), paths.end());
  write_run_manifest(sidecar(a.out), "infer", argv, &cfg, inputs, {a.out});
  out << "wrote " << rows.size() << " predictions to " << a.out;
  if (stats.degenerate) out << " (" << stats.degenerate << " degenerate spans dropped)";
  out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred;
  std::vector<std::string> gt;
  std::string out;
  std::string csv;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  std::vector<std::vector<featio::Annotation>> sets;
  for (const auto& g : a.gt) sets.push_back(featio::read_annotations(g));
  const auto gts = sets.size() == 1 ? sets.front() : metrics::merge_annotations(sets);
  const auto report = metrics::evaluate(infer::read_predictions(a.pred), gts);
  const std::string json = metrics::report_json(report);
  out << json;
  std::vector<fs::path> outputs;
  if (!a.out.empty()) {
    write_text(a.out, json);
    outputs.push_back(a.out);
  }
  if (!a.csv.empty()) {
    write_text(a.csv, metrics::report_csv_header() + metrics::report_csv_row(report));
    outputs.push_back(a.csv);
  }
  std::vector<fs::path> inputs{a.pred};
  inputs.insert(inputs.end(), a.gt.begin(), a.gt.end());
  if (!outputs.empty()) write_run_manifest(sidecar(outputs.front()), "eval", argv, nullptr, inputs, outputs);
  return kExitOk;
}

struct FuseArgs {
  std::string audio;
  std::string video;
  std::string out;
};

int cmd_fuse(const FuseArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const auto fused = infer::fuse_predictions(infer::read_predictions(a.audio), infer::read_predictions(a.video));
  infer::write_predictions(a.out, fused);
  write_run_manifest(sidecar(a.out), "fuse", argv, nullptr, {a.audio, a.video}, {a.out});
  out << "fused " << fused.size() << " samples into " << a.out << "\n";
  return kExitOk;
}

struct RenderArgs {
  std::string pred;
  std::string gt;
  std::string id;
  std::string out;
};

int cmd_render(const RenderArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const auto gts = featio::read_annotations(a.gt);
  const auto preds = infer::read_predictions(a.pred);
  const featio::Annotation* g = nullptr;
  for (const auto& x : gts) {
    if (x.id == a.id) g = &x;
  }
  const infer::PredictionRecord* p = nullptr;
  for (const auto& x : preds) {
    if (x.id == a.id) p = &x;
  }
  if (!g) throw FormatError("render: id " + a.id + " not found in " + a.gt);
  if (!p) throw FormatError("render: id " + a.id + " not found in " + a.pred);
  write_text(a.out, render_timeline_svg(*g, p));
  write_run_manifest(sidecar(a.out), "render", argv, nullptr, {a.pred, a.gt}, {a.out});
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  std::string size = "tiny";
  std::size_t seeds = 20;
  double tolerance = 1e-4;
  std::string filter;
  std::string fault;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (!a.fault.empty()) tensor::inject_backward_fault(a.fault);
  const auto results = run_gradcheck_suite(a.seeds, a.tolerance, a.filter, &out);
  tensor::clear_backward_fault();
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.passed;
  out << (failed ? "FAIL" : "PASS") << ": " << results.size() - failed << "/" << results.size()
      << " gradient checks within " << a.tolerance << "\n";
  if (results.empty()) return kExitUsage;
  return failed ? kExitCheck : kExitOk;
}

}  // namespace

std::string git_blob_hash(const fs::path& path) {
  if (fs::is_directory(path)) throw FormatError(path.string() + " is a directory");
  const std::string body = slurp(path);
  return sha1("blob " + std::to_string(body.size()) + std::string(1, '\0') + body);
}

std::string combined_hash(const std::vector<fs::path>& paths) {
  std::string listing;
  for (const auto& p : paths) listing += git_blob_hash(p) + " " + p.filename().string() + "\n";
  return sha1(listing);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"tempseg: temporal forgery detection and localization", "tempseg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset (features, annotations, manifest)");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--n", sa.n, "Number of samples")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Dataset seed")->capture_default_str();
  synth->add_option("--dim", sa.dim, "Feature dimension")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--fps", sa.fps, "Feature frames per second")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--duration", sa.duration, "Sequence length in seconds")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--shift", sa.shift, "Mean shift inside forged segments")->capture_default_str();
  synth->add_option("--genuine-fraction", sa.genuine_fraction, "Probability a sample has no forgery")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a detector; writes checkpoints, loss.csv and config.txt");
  train->add_option("--config", ta.config, "key=value config file (defaults when omitted)");
  train->add_option("--data", ta.data, "Dataset manifest.json")->required();
  train->add_option("--annotations", ta.annotations, "Annotations JSONL (default: next to the manifest)");
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--set", ta.sets, "Override a config key (key=value), repeatable");
  train->add_flag("--deterministic", ta.deterministic, "Single worker, fixed reduction order");
  train->add_flag("--quiet", ta.quiet, "Do not print per-epoch losses");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Run a trained detector over feature files");
  inf->add_option("--model", ia.model, "Checkpoint (.tpk)")->required();
  inf->add_option("--config", ia.config, "Config file (default: config.txt next to the checkpoint)");
  inf->add_option("--features", ia.features, "A manifest.json or a single .tff file")->required();
  inf->add_option("--out", ia.out, "Prediction JSONL")->required();
  inf->add_option("--set", ia.sets, "Override a config key (key=value), repeatable");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  ev->add_option("--pred", ea.pred, "Prediction JSONL")->required();
  ev->add_option("--gt", ea.gt,
                 "Annotations JSONL; repeat to score against the per-id union (fused predictions)")
      ->required();
  ev->add_option("--out", ea.out, "Also write the JSON report here");
  ev->add_option("--csv", ea.csv, "Also write a one-row CSV here");

  FuseArgs fa;
  auto* fuse = app.add_subcommand("fuse", "Fuse audio and video predictions per sample");
  fuse->add_option("--audio-pred", fa.audio, "Audio prediction JSONL")->required();
  fuse->add_option("--video-pred", fa.video, "Video prediction JSONL")->required();
  fuse->add_option("--out", fa.out, "Fused prediction JSONL")->required();

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Draw ground truth and predictions for one sample as SVG");
  render->add_option("--pred", ra.pred, "Prediction JSONL")->required();
  render->add_option("--gt", ra.gt, "Annotations JSONL")->required();
  render->add_option("--id", ra.id, "Sample id")->required();
  render->add_option("--out", ra.out, "Output SVG")->required();

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every backward rule");
  gc->add_option("--size", ga.size, "Model size")->capture_default_str()->check(CLI::IsMember({"tiny"}));
  gc->add_option("--seeds", ga.seeds, "Random seeds per check")->capture_default_str()->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", ga.tolerance, "Maximum relative error")->capture_default_str();
  gc->add_option("--filter", ga.filter, "Only checks whose name contains this");
  gc->add_option("--inject-fault", ga.fault, "Negate one op's backward rule")->group("");

  std::vector<std::string> rest(args.rbegin(), args.rend());
  if (!rest.empty()) rest.pop_back();  // program name
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sa, args, out);
    if (*train) return cmd_train(ta, args, out);
    if (*inf) return cmd_infer(ia, args, out);
    if (*ev) return cmd_eval(ea, args, out);
    if (*fuse) return cmd_fuse(fa, args, out);
    if (*render) return cmd_render(ra, args, out);
    if (*gc) return cmd_gradcheck(ga, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheck;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace tempseg::cli
