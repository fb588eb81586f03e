// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/upsnet/tokenizer.hpp"

#include <atomic>
#include <stdexcept>

#include "unipde/common.hpp"

namespace unipde::net {

std::vector<int> tokenize_meta(const std::string& text, std::size_t max_len) {
  if (max_len < 3) throw ConfigError("max_meta_len must be at least 3");
  std::size_t keep = text.size();
  if (keep + 2 > max_len) {
    keep = max_len - 2;
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      log_warn("metadata '" + text + "' truncated to " + std::to_string(keep) + " bytes (further truncations not reported)");
    }
  }
  std::vector<int> ids;
  ids.reserve(keep + 2);
  ids.push_back(kBosToken);
  for (std::size_t i = 0; i < keep; ++i) ids.push_back(static_cast<unsigned char>(text[i]));
  ids.push_back(kEosToken);
  return ids;
}

std::string detokenize(const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(kVocabSize)) throw std::invalid_argument("token id out of range");
    if (id < 256) out.push_back(static_cast<char>(id));
  }
  return out;
}

}  // namespace unipde::net
