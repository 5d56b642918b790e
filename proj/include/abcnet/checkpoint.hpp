// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "abcnet/model.hpp"

namespace abcnet::checkpoint {

/// Architecture fields as key=value pairs, the same keys the CLI config file
/// accepts under the "model." prefix.
std::map<std::string, std::string> config_entries(const model::ABCNetConfig& cfg);
/// Applies recognized keys on top of `base`; unknown keys raise ConfigError.
model::ABCNetConfig apply_config_entries(const std::map<std::string, std::string>& entries,
                                         model::ABCNetConfig base);

// A checkpoint directory holds weights.bin, a sequence of records
//   u32 name length, name bytes, u32 rank, rank x i64 extents,
//   extents-product x f32 little-endian values
// after an 8-byte magic and a u32 record count, and manifest.txt with the
// configuration and one line per record. Values are stored as 32-bit floats,
// so weights that are already float-representable round-trip bit-exactly.

void save(const std::string& dir, const model::NetworkWeights& weights,
          const model::ABCNetConfig& cfg);

struct Loaded {
  model::ABCNetConfig config;
  model::NetworkWeights weights;
};

Loaded load(const std::string& dir);

}  // namespace abcnet::checkpoint
