// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unipde/gradkit/tensor.hpp"
#include "unipde/unirep/unirep.hpp"
#include "unipde/upsnet/model.hpp"

namespace unipde::eval {

/// Maps normalized unified states [B x N x n x n] of dimension dim, with
/// their metadata strings, to predicted next states of the same shape.
using Predictor =
    std::function<gk::Tensor(const gk::Tensor& states, const std::vector<std::string>& metadata, int dim)>;

/// Gradient-free forward of model; coordinate channels are attached when
/// the model is configured for them.
Predictor model_predictor(const net::Model& model);

/// FNV-1a over the names and raw bytes of every parameter.
std::uint64_t params_checksum(const net::Model& model);

/// Physical-unit nRMSE of every teacher-forcing pair of test, in pair
/// order. Inputs are strided down to model_n when test.n > model_n and the
/// predictions are Fourier-upsampled back to test.n. Skipped pairs (zero
/// target) are NaN.
std::vector<double> pair_nrmse(const Predictor& predict, const rep::UnifiedDataset& test,
                               const rep::NormalizationTable& norm, std::size_t model_n, std::size_t batch = 64);

/// Mean one-step nRMSE over the test pairs, in physical units. Throws
/// ConfigError when norm has no statistics for test.name.
double eval_nrmse(const Predictor& predict, const rep::UnifiedDataset& test, const rep::NormalizationTable& norm,
                  std::size_t batch = 64);
/// As above; also verifies the parameters are untouched.
double eval_nrmse(const net::Model& model, const rep::UnifiedDataset& test, const rep::NormalizationTable& norm,
                  std::size_t batch = 64);

/// nRMSE at the resolution of hires_test (m) of a model working at n:
/// strided input, prediction at n, spectral upsampling to m. m == n gives
/// eval_nrmse exactly. Throws ConfigError unless m / n is a power of two.
double eval_superres(const Predictor& predict, const rep::UnifiedDataset& hires_test,
                     const rep::NormalizationTable& norm, std::size_t n, std::size_t batch = 64);
double eval_superres(const net::Model& model, const rep::UnifiedDataset& hires_test,
                     const rep::NormalizationTable& norm, std::size_t batch = 64);

struct RolloutResult {
  gk::Tensor trajectory;      // [completed x N x n x n], physical units
  std::size_t completed = 0;
  bool error = false;         // a prediction was not finite; trajectory stops before it
};

/// Feeds predictions back as inputs for steps steps starting from the
/// normalized state u0 [N x n x n]. Padding entries are zeroed before each
/// step; the metadata string is held fixed.
RolloutResult rollout(const Predictor& predict, const gk::Tensor& u0, const std::string& metadata,
                      const rep::ChannelMask& mask, int dim, const rep::FamilyStats& stats, std::size_t steps);

struct RolloutErrors {
  std::vector<std::vector<double>> per_traj;  // [trajectory][step - 1], completed steps only
  std::size_t failed = 0;                     // trajectories whose rollout hit a non-finite state

  /// Mean and median over trajectories that reached step (1-based).
  double mean_at(std::size_t step) const;
  double median_at(std::size_t step) const;
};

/// Rolls out every test trajectory from its first frame for
/// min(steps, T - 1) steps and scores each step against the truth.
RolloutErrors rollout_errors(const Predictor& predict, const rep::UnifiedDataset& test,
                             const rep::NormalizationTable& norm, std::size_t steps);

}  // namespace unipde::eval
