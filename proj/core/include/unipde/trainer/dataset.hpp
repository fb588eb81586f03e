// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "unipde/pdegen/trajectory.hpp"
#include "unipde/unirep/unirep.hpp"

namespace unipde::train {

/// Train and test trajectories of one dataset, both normalized with the
/// statistics of the train part.
struct FamilySplit {
  rep::UnifiedDataset train;
  rep::UnifiedDataset test;
};

/// The last max(1, round(test_fraction * num_traj)) trajectories form the
/// test part. Needs at least two trajectories.
FamilySplit split_family(const pde::TrajectorySet& set, double test_fraction);

/// Every teacher-forcing pair of every set, dataset-major.
std::vector<rep::BatchItem> pair_pool(const std::vector<const rep::UnifiedDataset*>& sets);

/// In-place Fisher-Yates shuffle driven by the raw 64-bit engine output, so
/// the permutation only depends on the engine state.
void shuffle_items(std::vector<rep::BatchItem>& items, std::mt19937_64& rng);

}  // namespace unipde::train
