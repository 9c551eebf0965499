// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#pragma once

#include <stdexcept>
#include <string>

namespace tempseg {

/// Bad input data or file contents. CLI maps this to exit code 2.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition (shapes, ranges, config).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numeric check failed (non-finite value, gradient mismatch).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tempseg
