// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/trainer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "unipde/common.hpp"

namespace unipde::train {

FamilySplit split_family(const pde::TrajectorySet& set, double test_fraction) {
  if (set.num_traj < 2) throw ConfigError("need at least two trajectories to split '" + rep::metadata_string(set) + "'");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  const auto want = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(set.num_traj)));
  const std::size_t test = std::clamp<std::size_t>(want, 1, set.num_traj - 1);
  const std::size_t train = set.num_traj - test;
  const auto map = rep::default_quantity_map(set);
  const pde::TrajectorySet train_set = set.subset(0, train);
  const rep::FamilyStats stats = rep::compute_stats(train_set, map);
  FamilySplit out;
  out.train = rep::prepare_dataset(train_set, map, stats);
  out.test = rep::prepare_dataset(set.subset(train, set.num_traj), map, stats);
  return out;
}

std::vector<rep::BatchItem> pair_pool(const std::vector<const rep::UnifiedDataset*>& sets) {
  std::vector<rep::BatchItem> items;
  for (std::size_t d = 0; d < sets.size(); ++d) {
    for (const auto& p : rep::make_pairs(sets[d]->num_traj, sets[d]->timesteps)) items.push_back({d, p});
  }
  return items;
}

void shuffle_items(std::vector<rep::BatchItem>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace unipde::train
