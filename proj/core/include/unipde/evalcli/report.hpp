// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace unipde::eval {

/// Column order of report.csv.
inline constexpr const char* kReportHeader =
    "config_hash,stage,epoch,setting,family,k_shot,resolution,seed,loss_align,loss_task,nrmse";
inline constexpr const char* kTimingHeader = "config_hash,setting,seed,phase,family,seconds";

/// One report line. stage is "1" or "2" for training epochs, otherwise one
/// of test, rollout, fewshot, superres. epoch counts the epochs (or rollout
/// steps) the row refers to. NaN numbers and absent k_shot print as empty
/// fields.
struct ReportRow {
  std::string config_hash;
  std::string stage;
  std::size_t epoch = 0;
  std::string setting;
  std::string family;
  std::optional<std::size_t> k_shot;
  std::size_t resolution = 0;
  std::uint64_t seed = 0;
  double loss_align = 0;
  double loss_task = 0;
  double nrmse = 0;
};

std::string format_row(const ReportRow& row);
/// Inverse of format_row. Throws FormatError.
ReportRow parse_row(const std::string& line);
/// Rows of a report file, header checked.
std::vector<ReportRow> read_report(const std::filesystem::path& path);

/// Append-only CSV writer; every row is flushed so partial runs keep their
/// rows. Safe to call from several threads.
class CsvLog {
 public:
  /// truncate starts a fresh file; otherwise rows are appended and the header
  /// is written only when the file is new or empty.
  CsvLog(const std::filesystem::path& path, const std::string& header, bool truncate);
  void append(const std::string& line);
  bool is_open() const { return out_.is_open(); }

 private:
  std::ofstream out_;
  std::mutex mutex_;
};

}  // namespace unipde::eval
