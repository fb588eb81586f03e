// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "unipde/trainer/adam.hpp"
#include "unipde/trainer/dataset.hpp"
#include "unipde/unirep/unirep.hpp"
#include "unipde/upsnet/model.hpp"

namespace unipde::train {

/// Parameters updated during stage 1. The transformer body is always frozen
/// except under kAll.
enum class Stage1Trainable { kEmbedderPredictor, kEmbedderOnly, kAll };
std::string stage1_trainable_name(Stage1Trainable t);
Stage1Trainable parse_stage1_trainable(const std::string& name);

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 5e-5;
  double weight_decay = 1e-5;
  double grad_clip = -1.0;
  double dropout = 0.0;
  std::size_t stage1_epochs = 20;
  std::size_t stage2_epochs = 40;
  double fewshot_lr = 1e-5;
  std::size_t fewshot_epochs = 10;
  std::uint64_t seed = 0;
  bool mmd_median = true;      // otherwise mmd_sigma is used as is
  double mmd_sigma = 1.0;
  double align_weight = 1.0;   // stage 1 only
  double task_weight = 1.0;    // stage 1 only; later stages use the plain task loss
  Stage1Trainable stage1_trainable = Stage1Trainable::kEmbedderPredictor;
  std::size_t align_reference_size = 0;  // reference rows per step; 0: batch size
  std::size_t checkpoint_every = 0;      // epochs; 0: never

  /// Throws ConfigError.
  void validate() const;
  AdamConfig adam(double learning_rate) const;
};

struct EpochStats {
  int stage = 0;
  std::size_t epoch = 0;   // 1-based within the stage
  double loss_align = 0;   // mean over the epoch's batches; NaN when unused
  double loss_task = 0;
  std::size_t steps = 0;
};

struct TrainState {
  int stage = 1;            // stage the next epoch belongs to
  std::size_t epoch = 0;    // epochs finished in that stage
  Adam adam;
  std::mt19937_64 rng;
  gk::Tensor reference;     // alignment targets, fixed once stage 1 starts
  std::vector<EpochStats> history;
};

TrainState initial_state(const TrainConfig& cfg);

struct TrainHooks {
  std::function<void(int stage, std::size_t epoch, std::size_t batch, const rep::UnifiedBatch&)> on_batch;
  std::function<void(const EpochStats&, const net::Model&)> on_epoch;
  /// Checkpoints go to <dir>/stage<S>_epoch<E> when checkpoint_every > 0.
  std::filesystem::path checkpoint_dir;
  const rep::NormalizationTable* norm = nullptr;  // recorded in checkpoints
  /// Stop after this many epochs in the current call (0: no limit).
  std::size_t max_epochs = 0;
};

/// Loss of one batch. Alignment is skipped when reference is empty or the
/// align weight is 0; outputs are NaN for skipped terms.
struct StepLosses {
  gk::Var total;
  double align = 0;
  double task = 0;
};
StepLosses batch_loss(const net::Model& model, net::ParamBinder& p, const rep::UnifiedBatch& batch,
                      const gk::Tensor& reference, const TrainConfig& cfg, std::mt19937_64& rng, bool with_align);

/// Trainable-parameter predicate for stage 1.
std::function<bool(const std::string&)> stage1_filter(Stage1Trainable t);

/// Alignment plus task pretraining of the embedding network. The reference
/// features are computed from corpus on first use and then kept fixed.
/// Does nothing once state.stage > 1. Leaves state at stage 2, epoch 0.
void stage1_train(net::Model& model, const std::vector<const rep::UnifiedDataset*>& sets,
                  const std::vector<std::string>& corpus, const TrainConfig& cfg, TrainState& state,
                  const TrainHooks& hooks = {});

/// Task-only training of every parameter on the shuffled multi-dataset pool.
void stage2_train(net::Model& model, const std::vector<const rep::UnifiedDataset*>& sets, const TrainConfig& cfg,
                  TrainState& state, const TrainHooks& hooks = {});

/// Copy of model fine-tuned on the first k trajectories of data at
/// fewshot_lr for fewshot_epochs. k = 0 returns an unchanged copy.
net::Model fewshot_adapt(const net::Model& model, const rep::UnifiedDataset& data, std::size_t k,
                         const TrainConfig& cfg);

/// <base>.upsw (parameters, Adam moments, alignment targets) and <base>.json.
/// The sidecar also records norm when given.
void save_checkpoint(const std::filesystem::path& base, const net::Model& model, const TrainState& state,
                     const rep::NormalizationTable* norm = nullptr);
/// Model config in the checkpoint must equal model.config().
void load_checkpoint(const std::filesystem::path& base, net::Model& model, TrainState& state);

}  // namespace unipde::train
