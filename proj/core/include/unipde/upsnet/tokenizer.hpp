// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace unipde::net {

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by specials.
inline constexpr int kBosToken = 256;
inline constexpr int kEosToken = 257;
inline constexpr int kPadToken = 258;
inline constexpr std::size_t kVocabSize = 259;

/// [BOS, bytes..., EOS]. Strings longer than max_len - 2 bytes are cut to
/// fit and a warning is logged. max_len must be at least 3.
std::vector<int> tokenize_meta(const std::string& text, std::size_t max_len);

/// Drops special tokens and concatenates the bytes.
std::string detokenize(const std::vector<int>& ids);

}  // namespace unipde::net
