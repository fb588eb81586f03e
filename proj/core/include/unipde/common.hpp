// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace unipde {

/// Invalid configuration or user input. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, solver blow-up, divergent training. Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kSilent = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();
void log(LogLevel level, std::string_view message);

inline void log_info(std::string_view m) { log(LogLevel::kInfo, m); }
inline void log_warn(std::string_view m) { log(LogLevel::kWarn, m); }

/// Worker count used by parallel_for. 1 means strictly serial.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for i in [0, count). Each index is handled by exactly one
/// worker and static chunking depends only on (count, num_threads()), so
/// results are reproducible for a fixed thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

constexpr bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// 64-bit FNV-1a, used for config hashes.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace unipde
