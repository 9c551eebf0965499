// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Flat parameter checkpoints ("TPK1"), little-endian:
//   magic "TPK1", u32 count, then per parameter
//   u16 name length, name bytes, u8 rank, rank x u32 dims, f32 data.
// Parameters are stored in registration order.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tempseg/tensor.hpp"

namespace tempseg::tensor {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> data;

  bool operator==(const NamedArray&) const = default;
};

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> params);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

}  // namespace tempseg::tensor
