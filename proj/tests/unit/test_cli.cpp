// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cli.hpp"
#include "tempseg/featio.hpp"
#include "tempseg/infer.hpp"
#include "tempseg/metrics.hpp"
#include "test_util.hpp"

namespace cli = tempseg::cli;
using tempseg::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "tempseg");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kTinyConfig =
    "input_dim=4\nmodel_dim=8\nn_blocks=2\nn_levels=2\nwindow_size=3\nn_heads=2\n"
    "M_max=64\nepochs=2\nwarmup_epochs=1\nbatch_size=4\nregression_ranges=16\n";

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"synth"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"eval", "--pred", "x.jsonl"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST(Cli, DataErrors) {
  TempDir dir("cli");
  EXPECT_EQ(run({"eval", "--pred", (dir / "none.jsonl").string(), "--gt", (dir / "none2.jsonl").string()}).code,
            cli::kExitData);
  std::ofstream(dir / "cfg.txt") << "bogus_key=1\n";
  const auto r = run({"train", "--config", (dir / "cfg.txt").string(), "--data", (dir / "m.json").string(),
                      "--out", (dir / "o").string()});
  EXPECT_NE(r.code, cli::kExitOk);
  EXPECT_NE(r.err.find("bogus_key"), std::string::npos) << r.err;
}

TEST(Cli, GradcheckExitCodes) {
  EXPECT_EQ(run({"gradcheck", "--seeds", "2", "--filter", "sigmoid"}).code, cli::kExitOk);
  EXPECT_EQ(run({"gradcheck", "--seeds", "1", "--filter", "sigmoid", "--inject-fault", "sigmoid"}).code,
            cli::kExitCheck);
}

TEST(Cli, EndToEndPipeline) {
  TempDir dir("cli");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run({"synth", "--out", data, "--n", "8", "--seed", "3", "--dim", "4", "--fps", "10",
                 "--duration", "4"})
                .code,
            cli::kExitOk);
  std::ofstream(dir / "cfg.txt") << kTinyConfig;
  const std::string model = (dir / "model").string();
  const auto tr = run({"train", "--config", (dir / "cfg.txt").string(), "--data", data + "/manifest.json",
                       "--out", model, "--deterministic", "--quiet"});
  ASSERT_EQ(tr.code, cli::kExitOk) << tr.err;
  for (const char* f : {"final.tpk", "loss.csv", "config.txt", "run_manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / "model" / f)) << f;

  const std::string pred = (dir / "pred.jsonl").string();
  const auto inf = run({"infer", "--model", model + "/final.tpk", "--features", data + "/manifest.json",
                        "--out", pred});
  ASSERT_EQ(inf.code, cli::kExitOk) << inf.err;
  const auto preds = tempseg::infer::read_predictions(pred);
  EXPECT_EQ(preds.size(), 8u);

  const auto ev = run({"eval", "--pred", pred, "--gt", data + "/annotations.jsonl", "--out",
                       (dir / "report.json").string()});
  ASSERT_EQ(ev.code, cli::kExitOk) << ev.err;
  const auto report = nlohmann::json::parse(tempseg::testing::read_file(dir / "report.json"));
  const auto direct = tempseg::metrics::evaluate(preds, tempseg::featio::read_annotations(data + "/annotations.jsonl"));
  EXPECT_EQ(report["final_score"].get<double>(), direct.final_score);

  // Fusing a prediction file with itself keeps confidences and doubles segments.
  const std::string fused = (dir / "fused.jsonl").string();
  ASSERT_EQ(run({"fuse", "--audio-pred", pred, "--video-pred", pred, "--out", fused}).code, cli::kExitOk);
  const auto f = tempseg::infer::read_predictions(fused);
  ASSERT_EQ(f.size(), preds.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(f[i].confidence, preds[i].confidence);
    EXPECT_EQ(f[i].segments.size(), 2 * preds[i].segments.size());
  }

  const std::string id = preds.front().id;
  const std::string svg1 = (dir / "a.svg").string(), svg2 = (dir / "b.svg").string();
  ASSERT_EQ(run({"render", "--pred", pred, "--gt", data + "/annotations.jsonl", "--id", id, "--out", svg1}).code,
            cli::kExitOk);
  ASSERT_EQ(run({"render", "--pred", pred, "--gt", data + "/annotations.jsonl", "--id", id, "--out", svg2}).code,
            cli::kExitOk);
  const auto svg = tempseg::testing::read_file(svg1);
  EXPECT_EQ(svg, tempseg::testing::read_file(svg2));
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_EQ(run({"render", "--pred", pred, "--gt", data + "/annotations.jsonl", "--id", "missing", "--out", svg1})
                .code,
            cli::kExitData);
}

TEST(Cli, GitBlobHash) {
  TempDir dir("cli");
  std::ofstream(dir / "h.txt", std::ios::binary) << "hello\n";
  // `git hash-object` of "hello\n".
  EXPECT_EQ(cli::git_blob_hash(dir / "h.txt"), "ce013625030ba8dba906f756967f9e9ca394464a");
}
