// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "unipde/gradkit/tensor.hpp"

// Classical solvers for the supported PDE families. Every solver returns
// `steps` snapshots at t = 0, dt, ..., (steps-1) dt, with the initial state
// as the first frame. Internal time steps are chosen from stability bounds
// unless `internal_dt` is positive, in which case the stored interval is
// split into round(dt / internal_dt) equal substeps.

namespace unipde::pde {

/// u_t + beta u_x = 0 on the periodic unit interval, solved exactly by a
/// spectral phase shift. u0: [n]. Returns [steps x 1 x n].
gk::Tensor solve_advection(const gk::Tensor& u0, double beta, std::size_t steps, double dt);

struct BurgersOptions {
  double internal_dt = 0.0;
  double cfl = 0.5;
};

/// u_t + (u^2/2)_x = (nu/pi) u_xx, periodic unit interval. Pseudo-spectral
/// with 2/3-rule dealiasing and integrating-factor RK4 (diffusion exact).
/// Throws NumericalError if |u| exceeds 1e6.
gk::Tensor solve_burgers(const gk::Tensor& u0, double nu, std::size_t steps, double dt, const BurgersOptions& opts = {});

struct SorptionParams {
  double diffusivity = 5e-4;
  double porosity = 0.29;
  double rho_s = 2880.0;
  double k_f = 3.5e-4;
  double n_f = 0.874;
  double left_value = 1.0;   // Dirichlet u(t, 0)
  double right_value = 0.0;  // Dirichlet u(t, 1)
  bool retardation = true;   // false gives R == 1 (heat equation)
  double u_floor = 1e-6;     // R is evaluated at max(u, u_floor)
  double internal_dt = 0.0;
};

/// Freundlich retardation R(u) = 1 + (1-phi)/phi rho_s k_f n_f u^(n_f-1).
double retardation_factor(double u, const SorptionParams& p);

/// u_t = D / R(u) u_xx on (0, 1) with Dirichlet ends. Backward Euler for
/// diffusion with R lagged one step; cell-centred grid with ghost cells.
gk::Tensor solve_diffusion_sorption(const gk::Tensor& u0, const SorptionParams& params, std::size_t steps, double dt);

struct ReactionDiffusion1DOptions {
  double internal_dt = 0.0;
  double max_internal_dt = 5e-3;
};

/// u_t - nu u_xx = rho u (1 - u), periodic unit interval. Strang splitting
/// of the exact logistic flow and the exact semi-discrete diffusion flow
/// (second-difference Laplacian, diagonalised by FFT).
gk::Tensor solve_reaction_diffusion_1d(const gk::Tensor& u0, double nu, double rho, std::size_t steps, double dt,
                                       const ReactionDiffusion1DOptions& opts = {});

struct ReactionDiffusion2DOptions {
  double internal_dt = 0.0;
  double domain_length = 2.0;  // (-1, 1)^2
};

/// Activator/inhibitor system with no-flux walls:
///   u1_t = nu1 lap u1 + u1 - u1^3 - k - u2,  u2_t = nu2 lap u2 + u1 - u2.
/// u0: [2 x n x n]. Heun (RK2) with the 5-point Laplacian.
gk::Tensor solve_reaction_diffusion_2d(const gk::Tensor& u0, double nu1, double nu2, double k, std::size_t steps,
                                       double dt, const ReactionDiffusion2DOptions& opts = {});

enum class SweBoundary { kPeriodic, kReflective };

struct ShallowWaterParams {
  double gravity = 1.0;
  double domain_lo = -2.5;
  double domain_hi = 2.5;
  SweBoundary boundary = SweBoundary::kReflective;
  double cfl = 0.4;
};

/// Shallow-water equations in conservative form (h, h u1, h u2) with
/// bathymetry source -g h grad b. First-order finite volumes with the
/// Lax-Friedrichs flux on hydrostatically reconstructed face states, so a
/// lake at rest over any bathymetry stays at rest. Fields are [n x n] with u1 along the last axis.
/// Returns [steps x 3 x n x n] holding (h, u1, u2). Throws NumericalError
/// on a non-positive depth.
gk::Tensor solve_shallow_water(const gk::Tensor& h0, const gk::Tensor& u0, const gk::Tensor& v0, const gk::Tensor& bathymetry,
                               const ShallowWaterParams& params, std::size_t steps, double dt);

}  // namespace unipde::pde
