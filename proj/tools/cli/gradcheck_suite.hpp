// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Finite-difference checks of every differentiable primitive, the backbone
// stages, both losses and the complete detector at a tiny configuration.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tempseg/gradcheck.hpp"

namespace tempseg::cli {

struct GradcheckCase {
  std::string name;
  std::function<tensor::GradcheckReport(std::uint64_t seed)> run;
  std::size_t max_seeds = 0;  // caps the requested seed count; 0 = no cap
};

/// Seeds used by the full-detector cases (each seed checks ~4000 coordinates).
inline constexpr std::size_t kDetectorSeeds = 5;

/// Input dim 8, 2 blocks, 2 levels, length 8.
std::vector<GradcheckCase> gradcheck_cases();

struct GradcheckOutcome {
  std::string name;
  std::size_t seeds = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  bool passed = false;
  std::string error;  // non-empty when a run threw
};

/// Runs every case for seeds 1..seeds. `filter` keeps cases whose name
/// contains it (empty keeps all). One line per case goes to `log` if given.
std::vector<GradcheckOutcome> run_gradcheck_suite(std::size_t seeds, double tolerance,
                                                  const std::string& filter = {},
                                                  std::ostream* log = nullptr);

}  // namespace tempseg::cli
