// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <iostream>
#include <string>
#include <vector>

#include "cli/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return tempseg::cli::run(args, std::cout, std::cerr);
}
