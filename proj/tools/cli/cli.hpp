// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// The `tempseg` command line: synth, train, infer, eval, fuse, render and
// gradcheck subcommands.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tempseg/featio.hpp"
#include "tempseg/infer.hpp"

namespace tempseg::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitCheck = 3,
};

/// Runs one invocation; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Git blob id of a file: SHA-1 over "blob <size>\0" followed by the bytes.
std::string git_blob_hash(const std::filesystem::path& path);

/// Hash over (path, blob id) pairs, for a set of inputs.
std::string combined_hash(const std::vector<std::filesystem::path>& paths);

/// Two tracks (ground truth in red, predictions in yellow) over a time axis
/// spanning [0, gt.duration]. `pred` may be null.
std::string render_timeline_svg(const featio::Annotation& gt, const infer::PredictionRecord* pred);

}  // namespace tempseg::cli
