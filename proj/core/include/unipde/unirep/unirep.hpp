// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "unipde/gradkit/tape.hpp"
#include "unipde/gradkit/tensor.hpp"
#include "unipde/pdegen/trajectory.hpp"

// Unified representation: every state is a [N x n x n] grid over the fixed
// quantity set, with 1D data on row 0 and unused quantities zeroed.

namespace unipde::rep {

inline constexpr std::size_t kNumQuantities = 4;
inline constexpr std::size_t kCoordChannels = 2;

/// velocity_x, velocity_y, pressure, density.
const std::array<std::string, kNumQuantities>& quantity_names();
/// Index in the quantity set. Throws ConfigError for unknown names.
std::size_t quantity_index(const std::string& name);

using ChannelMask = std::array<double, kNumQuantities>;
/// Source channel name -> quantity name.
using QuantityMap = std::map<std::string, std::string>;

/// u -> velocity_x; (u1, u2) -> (velocity_x, velocity_y); shallow water
/// h -> density. External sets must already use quantity names.
QuantityMap default_quantity_map(const pde::TrajectorySet& set);

/// Quantity slot of every source channel, in channel order. Throws
/// ConfigError if two channels share a slot or a channel is unmapped.
std::vector<std::size_t> channel_slots(const pde::TrajectorySet& set, const QuantityMap& map);
ChannelMask channel_mask(const std::vector<std::size_t>& slots);

/// "<family> k1=v1 k2=v2" with sorted keys and 6 significant digits.
std::string metadata_string(const std::string& family, const std::map<std::string, double>& coefficients);
std::string metadata_string(const pde::TrajectorySet& set);

struct Unified {
  gk::Tensor data;  // [num_traj x T x N x n x n]
  ChannelMask mask{};
};

/// Full lift of a trajectory set.
Unified unify(const pde::TrajectorySet& set, const QuantityMap& map);
/// Inverse of unify on the active channels (row 0 for 1D data).
std::vector<float> extract(const Unified& u, const pde::TrajectorySet& like, const QuantityMap& map);

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;
};
using FamilyStats = std::array<ChannelStats, kNumQuantities>;

inline constexpr double kStdFloor = 1e-8;

/// Per-quantity mean and standard deviation over every stored value of a
/// (training) set. Inactive quantities keep mean 0, std 1.
FamilyStats compute_stats(const pde::TrajectorySet& train, const QuantityMap& map);

/// In-place on [..., N, n, n]: active channels become (x - mean) / std,
/// masked channels and the padding rows of 1D data are left untouched.
void normalize(gk::Tensor& unified, const ChannelMask& mask, const FamilyStats& stats, int dim = 2);
gk::Tensor denormalize(const gk::Tensor& normalized, const ChannelMask& mask, const FamilyStats& stats, int dim = 2);

/// Dataset name -> stats, persisted as {name: {quantity: {mean, std}}}.
class NormalizationTable {
 public:
  void set(const std::string& name, const FamilyStats& stats) { table_[name] = stats; }
  bool contains(const std::string& name) const { return table_.count(name) > 0; }
  /// Throws ConfigError naming the dataset when absent.
  const FamilyStats& at(const std::string& name) const;
  const std::map<std::string, FamilyStats>& entries() const { return table_; }

  std::string to_json() const;
  static NormalizationTable from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static NormalizationTable load(const std::filesystem::path& path);

 private:
  std::map<std::string, FamilyStats> table_;
};

/// Teacher-forcing pair: frame t of trajectory traj predicts frame t + 1.
struct PairIndex {
  std::uint32_t traj = 0;
  std::uint32_t t = 0;
  friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

/// All num_traj * (T - 1) pairs, trajectory-major. Throws ConfigError if T < 2.
std::vector<PairIndex> make_pairs(std::size_t num_traj, std::size_t timesteps);

/// [2 x n x n] coordinate channels: x = c / (n - 1) along the last axis and
/// y = r / (n - 1) for 2D data; y is zero for 1D data.
gk::Tensor coordinate_channels(std::size_t n, int dim);

/// Appends the coordinate channels to a [B x N x n x n]
/// input batch -> [B x (N + 2) x n x n].
gk::Tensor attach_coords(const gk::Tensor& batch, int dim);

/// [C x m x m] -> [C x n x n]. Downsampling takes every (m / n)-th sample;
/// upsampling zero-pads the spectrum. For dim == 1 only row 0 carries data
/// and only the last axis is resampled. m and n must be powers of two.
gk::Tensor resample(const gk::Tensor& field, std::size_t n, int dim = 2);

/// Loss mask [N x n x n]: 1 on active channels (row 0 only for 1D data).
gk::Tensor output_mask(const ChannelMask& mask, std::size_t n, int dim);

/// Zeroes masked entries; their gradients are exactly zero as well.
gk::Var masked_select(gk::Var grid, const gk::Tensor& mask);

/// One dataset held compactly (source layout) and already normalized.
/// Frames are lifted into the unified grid on demand.
struct UnifiedDataset {
  std::string name;  // metadata string, also the normalization key
  pde::Family family = pde::Family::kAdvection;
  int dim = 1;
  std::size_t n = 0;
  std::size_t timesteps = 0;
  std::size_t num_traj = 0;
  std::vector<std::size_t> slots;
  ChannelMask mask{};
  FamilyStats stats{};
  std::vector<float> data;  // normalized, [traj][T][C][points]

  std::size_t points() const { return dim == 1 ? n : n * n; }
  std::size_t frame_size() const { return slots.size() * points(); }
  /// Writes the normalized unified frame [N x n x n] to out (zero-filled first).
  void lift_frame(std::size_t traj, std::size_t t, double* out) const;
  /// Loss mask for this dataset.
  gk::Tensor loss_mask() const { return output_mask(mask, n, dim); }
  /// Copy holding trajectories [begin, end).
  UnifiedDataset subset(std::size_t begin, std::size_t end) const;
};

UnifiedDataset prepare_dataset(const pde::TrajectorySet& set, const QuantityMap& map, const FamilyStats& stats);

/// A model-ready batch of teacher-forcing pairs.
struct UnifiedBatch {
  gk::Tensor inputs;   // [B x (N [+ 2]) x n x n]
  gk::Tensor targets;  // [B x N x n x n]
  gk::Tensor mask;     // [B x N x n x n]
  std::vector<std::string> metadata;
  std::vector<std::size_t> group;  // dataset index of each sample
  std::size_t size() const { return metadata.size(); }
};

struct BatchItem {
  std::size_t dataset = 0;
  PairIndex pair;
};

/// All datasets must share n.
UnifiedBatch make_batch(const std::vector<const UnifiedDataset*>& sets, const std::vector<BatchItem>& items,
                        bool with_coords);

}  // namespace unipde::rep
