// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "unipde/pdegen/trajectory.hpp"
#include "unipde/trainer/train.hpp"
#include "unipde/upsnet/model.hpp"

namespace unipde::eval {

/// Flat `key = value` settings. Lines starting with '#' (after optional
/// whitespace) and blank lines are ignored; a '#' after the value starts a
/// trailing comment. Later assignments of a key replace earlier ones.
class KeyValues {
 public:
  /// Throws ConfigError with the line number on malformed input.
  static KeyValues parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// "key=value" as given on the command line.
  void set_assignment(const std::string& assignment);
  void merge(const KeyValues& overrides);

  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }
  /// One "key = value" line per entry, keys sorted.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// A family and its full coefficient set, written "burgers nu=0.001".
/// Coefficients left out of the text take the family defaults.
struct FamilyEntry {
  pde::Family family = pde::Family::kAdvection;
  std::map<std::string, double> coefficients;

  std::string text() const;
  friend bool operator==(const FamilyEntry&, const FamilyEntry&) = default;
};

/// Entries separated by ';'. Unknown families or coefficients are ConfigErrors.
std::vector<FamilyEntry> parse_family_list(const std::string& text);
std::string family_list_text(const std::vector<FamilyEntry>& entries);

struct ExperimentConfig {
  std::filesystem::path out_dir = "unipde_out";
  std::uint64_t data_seed = 0;
  std::vector<std::uint64_t> seeds{0};
  std::size_t n = 64;
  std::size_t timesteps = 0;   // 0: family default
  double t_final = 0.0;        // 0: family default
  std::size_t train_traj = 200;
  std::size_t test_traj = 50;
  std::size_t heldout_traj = 500;  // adaptation pool of held-out and unseen families
  std::vector<FamilyEntry> train_families;
  std::vector<FamilyEntry> heldout_families;
  std::vector<FamilyEntry> unseen_families;
  std::vector<std::string> settings{"full"};
  std::vector<std::string> transfer_settings{"full"};
  std::vector<std::size_t> fewshot_k{0, 10, 100, 500};
  std::vector<std::size_t> superres_m{128};
  std::vector<FamilyEntry> superres_families;
  std::size_t rollout_steps = 10;
  bool baseline = false;
  std::size_t eval_every = 0;  // epochs between test evaluations while training; 0: none
  std::size_t eval_batch = 64;
  std::filesystem::path corpus;  // empty: built-in synthetic sentences
  std::size_t corpus_lines = 2000;
  int threads = 1;
  net::ModelConfig model;
  train::TrainConfig train;

  /// The desk-scale four-family preset.
  static ExperimentConfig desk_preset();
  /// Starts from the preset; unknown keys and bad values are ConfigErrors.
  static ExperimentConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;

  /// Throws ConfigError.
  void validate() const;
  /// 16 hex digits of FNV-1a over the canonical text without out_dir.
  std::string hash() const;
};

/// Model and training configuration of one ablation cell.
struct SettingPlan {
  std::string name;
  net::ModelConfig model;
  train::TrainConfig train;
  bool stage1 = true;
};

/// full, no_stage1, no_align, no_task, no_metadata, l<channels>.
SettingPlan setting_plan(const ExperimentConfig& cfg, const std::string& setting);

}  // namespace unipde::eval
