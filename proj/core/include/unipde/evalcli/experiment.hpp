// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "unipde/evalcli/config.hpp"
#include "unipde/evalcli/report.hpp"
#include "unipde/pdegen/trajectory.hpp"
#include "unipde/trainer/dataset.hpp"
#include "unipde/trainer/train.hpp"
#include "unipde/unirep/unirep.hpp"
#include "unipde/upsnet/model.hpp"

namespace unipde::eval {

enum class Role { kTrain, kHeldOut, kUnseen };

struct FamilyData {
  FamilyEntry entry;
  Role role = Role::kTrain;
  pde::GenSpec spec;
  train::FamilySplit split;

  const std::string& name() const { return split.train.name; }
};

struct EvalReport {
  std::vector<ReportRow> rows;
};

struct BaselineResult {
  net::Model model;
  double nrmse = 0;
  double loss_task = 0;  // mean task loss of the last epoch
};

/// Per-family reference: the FNO stack and predictor of the main model with
/// no transformer body and no metadata, trained on one family only.
BaselineResult fno_baseline_train(const train::FamilySplit& data, const rep::NormalizationTable& norm,
                                  const net::ModelConfig& base, const train::TrainConfig& cfg, std::uint64_t seed,
                                  std::size_t eval_batch = 64);

/// Lines of a batch log whose families include one of forbidden.
std::size_t audit_batch_log(const std::filesystem::path& path, const std::vector<std::string>& forbidden);

/// Everything of one configured run, rooted at cfg.out_dir:
///   config.txt, norm_stats.json, data/, checkpoints/<setting>_seed<S>/,
///   report.csv, timings.csv, batches.csv.
class Experiment {
 public:
  /// Validates cfg, creates the output directory and writes config.txt.
  explicit Experiment(ExperimentConfig cfg);
  ~Experiment();

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  const std::filesystem::path& out_dir() const { return cfg_.out_dir; }

  /// Generates or reloads every family, splits it and writes
  /// norm_stats.json. Repeated calls do nothing.
  void prepare_data();
  const std::vector<FamilyData>& families() const { return families_; }
  const rep::NormalizationTable& norm() const { return norm_; }
  /// Test part of family at resolution m, normalized with its training stats.
  rep::UnifiedDataset hires_test(const FamilyData& family, std::size_t m);

  std::filesystem::path checkpoint_dir(const std::string& setting, std::uint64_t seed) const;

  /// Stage 1 from scratch, saved as <checkpoint_dir>/stage1.
  void run_stage1(const std::string& setting, std::uint64_t seed);
  /// Stage 2 from <checkpoint_dir>/stage1 (from scratch when the setting
  /// skips stage 1), saved as <checkpoint_dir>/final.
  net::Model run_stage2(const std::string& setting, std::uint64_t seed);
  /// Both stages in one go, saved as <checkpoint_dir>/final.
  net::Model train(const std::string& setting, std::uint64_t seed);
  /// Continues from a periodic checkpoint (<checkpoint_dir>/stage<S>_epoch<E>)
  /// through the end of stage 2; bit-identical to an uninterrupted run.
  net::Model resume(const std::string& setting, std::uint64_t seed, const std::filesystem::path& checkpoint);
  net::Model load_final(const std::string& setting, std::uint64_t seed) const;

  std::vector<ReportRow> evaluate_test(const net::Model& model, const std::string& setting, std::uint64_t seed);
  std::vector<ReportRow> evaluate_rollout(const net::Model& model, const std::string& setting, std::uint64_t seed,
                                          std::size_t steps);
  /// Held-out and unseen-coefficient families; k = 0 is zero-shot.
  std::vector<ReportRow> evaluate_fewshot(const net::Model& model, const std::string& setting, std::uint64_t seed,
                                          const std::vector<std::size_t>& ks);
  std::vector<ReportRow> evaluate_superres(const net::Model& model, const std::string& setting, std::uint64_t seed,
                                           const std::vector<std::size_t>& ms);
  std::vector<ReportRow> run_baseline(std::uint64_t seed);

  /// The whole protocol over settings x seeds, starting fresh report,
  /// timing and batch logs. Rows reach report.csv as they are produced.
  EvalReport run();

 private:
  struct Logs;

  void open_logs(bool truncate);
  void emit(const ReportRow& row, std::vector<ReportRow>* sink);
  void time_phase(const std::string& setting, std::uint64_t seed, const std::string& phase, const std::string& family,
                  double seconds);
  net::Model train_impl(const std::string& setting, std::uint64_t seed, bool stage1, bool stage2,
                        const std::filesystem::path& resume_from);
  std::vector<const rep::UnifiedDataset*> train_sets() const;
  std::vector<std::string> excluded_names() const;
  const std::vector<std::string>& corpus();

  ExperimentConfig cfg_;
  std::string hash_;
  bool prepared_ = false;
  std::vector<FamilyData> families_;
  rep::NormalizationTable norm_;
  std::vector<std::string> corpus_;
  std::unique_ptr<Logs> logs_;
  std::vector<ReportRow>* collect_ = nullptr;
};

}  // namespace unipde::eval
