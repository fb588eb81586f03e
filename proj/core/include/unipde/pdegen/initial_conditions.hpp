// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "unipde/gradkit/tensor.hpp"

namespace unipde::pde {

/// Cell-centred points of a uniform grid on [lo, hi): lo + (j + 0.5) h.
std::vector<double> cell_centers(std::size_t n, double lo = 0.0, double hi = 1.0);

/// Nodes j / n of a periodic unit interval. Periodic families are stored on
/// this grid so that strided subsampling between resolutions is aligned.
std::vector<double> periodic_grid(std::size_t n);

/// splitmix64 mixing of (seed, index); gives independent per-trajectory seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct SineMode {
  int k = 1;               // integer wavenumber on the unit period
  double amplitude = 1.0;
  double phase = 0.0;
};

/// u(x) = sum_j A_j sin(2 pi k_j x + phi_j) on the given points.
std::vector<double> synthesize_sinusoid(const std::vector<SineMode>& modes, const std::vector<double>& x);

struct SinusoidOptions {
  int num_modes = 2;
  std::pair<double, double> amplitude_range{0.0, 1.0};
  int k_max = 4;
};

/// Draws k_j uniformly from {1..k_max}, A_j from amplitude_range and
/// phi_j from [0, 2 pi), then evaluates on the periodic grid j / n.
/// Throws std::invalid_argument if num_modes < 1.
gk::Tensor sample_ic_sinusoid(std::uint64_t seed, std::size_t n, const SinusoidOptions& opts = {});
/// 2D analogue with sin(2 pi (kx x + ky y) + phi); kx, ky in {0..k_max}, not both 0.
gk::Tensor sample_ic_sinusoid_2d(std::uint64_t seed, std::size_t n, const SinusoidOptions& opts = {});

/// Affine map of a field onto [lo, hi] (constant fields map to the midpoint).
void rescale_to_range(gk::Tensor& field, double lo, double hi);

/// Gaussian random field on the unit square: white noise filtered by
/// exp(-|k|^2 l^2 / 2) with k = 2 pi * frequency, real part of the inverse
/// FFT, standardised to zero mean and unit variance. A field with no
/// variance after filtering is returned as zeros. n must be a power of two.
gk::Tensor sample_ic_grf(std::uint64_t seed, std::size_t n, double length_scale);

/// Same synthesis without the final standardisation (exposed for tests).
gk::Tensor grf_unstandardized(std::uint64_t seed, std::size_t n, double length_scale);

}  // namespace unipde::pde
