// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "unipde/gradkit/tensor.hpp"

namespace unipde::gk {

using NamedTensors = std::map<std::string, Tensor>;

inline constexpr char kWeightMagic[4] = {'U', 'P', 'S', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

/// Little-endian weight file: "UPSW", version u32, then one record per
/// tensor until EOF: name length u32, UTF-8 name, rank u32, extents u64
/// each, dtype tag u8 (0 real64, 1 real32, 2 complex pair of real64), data.
/// Records are written in name order.
void write_weights(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_weights(const std::filesystem::path& path);

std::string encode_weights(const NamedTensors& tensors);
NamedTensors decode_weights(const std::string& bytes);

}  // namespace unipde::gk
