// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Flat key=value run configuration. One key per line; '#' starts a comment;
// blank lines are ignored. Unknown keys are rejected with the list of valid
// keys.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tempseg/backbone.hpp"
#include "tempseg/infer.hpp"
#include "tempseg/loss.hpp"
#include "tempseg/trainer.hpp"

namespace tempseg::config {

struct RunConfig {
  backbone::ModelConfig model;
  trainer::TrainConfig train;
  loss::LossConfig loss;
  infer::InferConfig infer;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Every accepted key, in file order.
std::vector<std::string> config_keys();

/// Applies one assignment; throws InvalidArgument on an unknown key or a
/// malformed value.
void set_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Parses text on top of `base` (defaults when omitted) and validates.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text with every key; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

}  // namespace tempseg::config
