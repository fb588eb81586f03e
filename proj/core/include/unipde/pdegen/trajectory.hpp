// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace unipde::pde {

enum class Family {
  kAdvection,
  kBurgers,
  kDiffusionSorption,
  kReactionDiffusion1D,
  kReactionDiffusion2D,
  kShallowWater,
  kExternal,
};

/// Canonical lowercase name, e.g. "reaction_diffusion_1d".
std::string family_name(Family f);
/// Inverse of family_name. Throws ConfigError for unknown names.
Family parse_family(const std::string& name);
/// Spatial dimension of a generated family (external sets carry their own).
int family_dim(Family f);
/// Native channel names of a generated family.
std::vector<std::string> family_channels(Family f);

/// Solved trajectories of one family. Values are stored as float in
/// [traj][time][channel][space] order, space being n or n*n points.
struct TrajectorySet {
  Family family = Family::kAdvection;
  int dim = 1;
  std::size_t n = 0;
  std::size_t timesteps = 0;
  std::size_t num_traj = 0;
  std::vector<std::string> channels;
  std::map<std::string, double> coefficients;
  std::vector<std::pair<double, double>> bounds;
  double dt = 0.0;  // time between stored snapshots
  std::uint64_t seed = 0;
  std::vector<float> data;

  std::size_t points() const { return dim == 1 ? n : n * n; }
  std::size_t frame_size() const { return channels.size() * points(); }
  std::size_t traj_size() const { return timesteps * frame_size(); }
  const float* frame(std::size_t traj, std::size_t t) const { return data.data() + traj * traj_size() + t * frame_size(); }
  float* frame(std::size_t traj, std::size_t t) { return data.data() + traj * traj_size() + t * frame_size(); }

  /// Throws FormatError when sizes disagree or values are not finite.
  void validate() const;
  /// Copy holding trajectories [begin, end).
  TrajectorySet subset(std::size_t begin, std::size_t end) const;
};

struct GenSpec {
  Family family = Family::kAdvection;
  std::size_t n = 64;
  std::size_t timesteps = 0;   // 0: family default
  std::size_t num_traj = 200;
  std::uint64_t seed = 0;
  double t_final = 0.0;        // 0: family default
  std::size_t solve_n = 0;     // internal grid; 0: family default
  std::map<std::string, double> coefficients;  // overrides of the defaults
  bool periodic = false;       // shallow water only
};

std::map<std::string, double> default_coefficients(Family f);
std::size_t default_timesteps(Family f);
double default_t_final(Family f);

/// Samples initial conditions from per-trajectory seeds and integrates them.
/// Trajectory i depends only on (seed, i), so sets generated with different
/// thread counts or sizes agree on shared trajectories.
TrajectorySet generate_family(const GenSpec& spec);

inline constexpr char kTrajectoryMagic[4] = {'U', 'P', 'S', 'T'};
inline constexpr std::uint32_t kTrajectoryVersion = 1;

/// "UPST", version u32, header length u64, UTF-8 JSON header, then the
/// payload as little-endian float32.
void write_trajectories(const TrajectorySet& set, const std::filesystem::path& path);
TrajectorySet read_trajectories(const std::filesystem::path& path);
/// Reads only the header; the returned set has an empty data vector.
TrajectorySet read_trajectory_header(const std::filesystem::path& path);

}  // namespace unipde::pde
