// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tempseg/tensor.hpp"

namespace tempseg::tensor {

struct ExcludedCoordinate {
  std::size_t input;
  std::size_t index;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +-eps perturbation crossed a non-differentiable point
  /// (relu at 0, max ties, clamps); reported, not counted as failures.
  std::vector<ExcludedCoordinate> excluded;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
};

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares tape gradients of `f` at `inputs` against central differences.
/// Error per coordinate is |analytic - fd| / max(1, |analytic|, |fd|).
/// Inputs must be parameter leaves; their grad buffers are overwritten.
/// Throws NumericError naming the primitive if any op yields NaN/Inf.
GradcheckReport gradcheck(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                          double eps = 1e-4);

}  // namespace tempseg::tensor
