// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/evalcli/report.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <system_error>

#include "unipde/common.hpp"

namespace unipde::eval {
namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_num(const std::string& f) {
  if (f.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0;
  const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || p != f.data() + f.size()) throw FormatError("bad number '" + f + "' in report");
  return v;
}

std::uint64_t parse_uint(const std::string& f) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc() || p != f.data() + f.size()) throw FormatError("bad integer '" + f + "' in report");
  return v;
}

void check_field(const std::string& f) {
  if (f.find_first_of(",\n\"") != std::string::npos) throw FormatError("report field '" + f + "' contains a separator");
}

}  // namespace

std::string format_row(const ReportRow& r) {
  check_field(r.config_hash);
  check_field(r.stage);
  check_field(r.setting);
  check_field(r.family);
  std::ostringstream out;
  out << r.config_hash << ',' << r.stage << ',' << r.epoch << ',' << r.setting << ',' << r.family << ','
      << (r.k_shot ? std::to_string(*r.k_shot) : "") << ',' << r.resolution << ',' << r.seed << ','
      << num(r.loss_align) << ',' << num(r.loss_task) << ',' << num(r.nrmse);
  return out.str();
}

ReportRow parse_row(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) f.push_back(cur);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 11) throw FormatError("report row has " + std::to_string(f.size()) + " fields, expected 11");
  ReportRow r;
  r.config_hash = f[0];
  r.stage = f[1];
  r.epoch = parse_uint(f[2]);
  r.setting = f[3];
  r.family = f[4];
  if (!f[5].empty()) r.k_shot = parse_uint(f[5]);
  r.resolution = parse_uint(f[6]);
  r.seed = parse_uint(f[7]);
  r.loss_align = parse_num(f[8]);
  r.loss_task = parse_num(f[9]);
  r.nrmse = parse_num(f[10]);
  return r;
}

std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open report '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw FormatError("'" + path.string() + "' is not a report file");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_row(line));
  }
  return rows;
}

CsvLog::CsvLog(const std::filesystem::path& path, const std::string& header, bool truncate) {
  const bool fresh = truncate || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (!fresh) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != header) throw FormatError("'" + path.string() + "' has a different header; refusing to append");
  }
  out_.open(path, truncate ? std::ios::trunc : std::ios::app);
  if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
  if (fresh) out_ << header << '\n' << std::flush;
}

void CsvLog::append(const std::string& line) {
  std::lock_guard<std::mutex> lock(mutex_);
  out_ << line << '\n' << std::flush;
}

}  // namespace unipde::eval
