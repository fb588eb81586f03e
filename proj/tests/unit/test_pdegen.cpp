// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "support.hpp"
#include "unipde/common.hpp"
#include "unipde/pdegen/initial_conditions.hpp"
#include "unipde/pdegen/solvers.hpp"
#include "unipde/pdegen/trajectory.hpp"

using namespace unipde;
using namespace unipde::pde;
using unipde::gk::Tensor;

namespace {

constexpr double kPi = std::numbers::pi;

Tensor frame_of(const Tensor& traj, std::size_t t) {
  const std::size_t per = traj.numel() / traj.dim(0);
  return Tensor::from({per}, std::vector<double>(traj.data().begin() + t * per, traj.data().begin() + (t + 1) * per));
}

double max_diff(const Tensor& a, const Tensor& b) { return unipde::gk::max_abs_diff(a, b); }

Tensor single_mode(std::size_t n, int k, double amp, double phase, double offset = 0.0) {
  Tensor u({n});
  for (std::size_t j = 0; j < n; ++j) u[j] = offset + amp * std::sin(2 * kPi * k * static_cast<double>(j) / n + phase);
  return u;
}

}  // namespace

TEST_CASE("sinusoid initial conditions") {
  const auto x = periodic_grid(32);
  const auto u = synthesize_sinusoid({{1, 1.0, 0.0}}, x);
  for (std::size_t j = 0; j < 32; ++j) CHECK(u[j] == std::sin(2 * kPi * x[j]));
  CHECK(sample_ic_sinusoid(7, 64) == sample_ic_sinusoid(7, 64));
  CHECK_FALSE(sample_ic_sinusoid(7, 64) == sample_ic_sinusoid(8, 64));
  SinusoidOptions bad;
  bad.num_modes = 0;
  CHECK_THROWS(sample_ic_sinusoid(1, 16, bad));

  // Monte-Carlo: spatial means average to zero.
  std::vector<double> means;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Tensor f = sample_ic_sinusoid(derive_seed(3, s), 64);
    means.push_back(f.sum() / 64.0);
  }
  double mu = 0, var = 0;
  for (double m : means) mu += m;
  mu /= 1000;
  for (double m : means) var += (m - mu) * (m - mu);
  const double stderr_ = std::sqrt(var / 999) / std::sqrt(1000.0);
  CHECK(std::abs(mu) <= 3 * stderr_ + 1e-15);
}

TEST_CASE("gaussian random field") {
  const Tensor flat = grf_unstandardized(5, 16, 1e6);
  double mn = flat[0], mx = flat[0];
  for (double v : flat.data()) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  CHECK(mx - mn < 1e-12);
  CHECK(sample_ic_grf(5, 16, 1e6).max_abs() == 0.0);
  CHECK(sample_ic_grf(9, 16, 0.1) == sample_ic_grf(9, 16, 0.1));
  CHECK_THROWS(sample_ic_grf(1, 12, 0.1));

  const Tensor g = sample_ic_grf(11, 32, 0.1);
  double m = 0, v = 0;
  for (double x : g.data()) m += x;
  m /= g.numel();
  for (double x : g.data()) v += (x - m) * (x - m);
  CHECK(std::abs(m) < 1e-12);
  CHECK(v / g.numel() == doctest::Approx(1.0).epsilon(1e-12));

  // Covariance along x decays monotonically with lag.
  const std::size_t n = 32;
  std::vector<double> cov(8, 0.0);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Tensor f = sample_ic_grf(derive_seed(17, s), n, 0.15);
    for (std::size_t lag = 0; lag < 8; ++lag) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) cov[lag] += f[r * n + c] * f[r * n + (c + lag) % n];
      }
    }
  }
  for (std::size_t lag = 1; lag < 8; ++lag) CHECK(cov[lag] < cov[lag - 1]);
}

TEST_CASE("advection is an exact shift") {
  const std::size_t n = 64;
  const Tensor u0 = sample_ic_sinusoid(21, n);
  const Tensor still = solve_advection(u0, 0.0, 5, 0.1);
  for (std::size_t t = 0; t < 5; ++t) CHECK(max_diff(frame_of(still, t), u0) < 1e-13);

  // beta * dt * n = 3 cells per frame.
  const Tensor shifted = solve_advection(u0, 0.5, 4, 3.0 / (0.5 * n));
  for (std::size_t t = 0; t < 4; ++t) {
    Tensor ref({n});
    for (std::size_t j = 0; j < n; ++j) ref[j] = u0[(j + n - (3 * t) % n) % n];
    CHECK(max_diff(frame_of(shifted, t), ref) < 1e-12);
  }

  const Tensor sine = single_mode(n, 1, 1.0, 0.0);
  const Tensor adv = solve_advection(sine, 0.4, 41, 0.05);
  CHECK(adv.shape() == gk::Shape{41, 1, n});
  double worst = 0;
  for (std::size_t t = 0; t < 41; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      const double x = static_cast<double>(j) / n;
      worst = std::max(worst, std::abs(adv[t * n + j] - std::sin(2 * kPi * (x - 0.4 * 0.05 * t))));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("burgers solver") {
  const std::size_t n = 64;
  const Tensor c = Tensor::full({n}, 0.37);
  const Tensor cs = solve_burgers(c, 0.01, 6, 0.1);
  for (std::size_t t = 0; t < 6; ++t) CHECK(max_diff(frame_of(cs, t), c) == 0.0);

  const Tensor decay = solve_burgers(single_mode(n, 1, 0.5, 0.3), 2.0, 11, 0.02);
  double prev = 1e9;
  for (std::size_t t = 0; t < 11; ++t) {
    const double amp = frame_of(decay, t).max_abs();
    CHECK(amp < prev);
    prev = amp;
  }

  // Mean is conserved.
  const Tensor u0 = single_mode(n, 2, 0.8, 0.1, 0.5);
  const Tensor b = solve_burgers(u0, 0.01, 21, 0.05);
  for (std::size_t t = 0; t < 21; ++t) CHECK(std::abs(frame_of(b, t).sum() / n - 0.5) / 0.5 < 1e-8);

  CHECK_THROWS(solve_burgers(u0, 0.0, 3, 0.1));
}

TEST_CASE("burgers RK4 self-convergence") {
  const std::size_t n = 64;
  const Tensor u0 = sample_ic_sinusoid(4, n);
  auto run = [&](double h) {
    BurgersOptions o;
    o.internal_dt = h;
    return frame_of(solve_burgers(u0, 0.05, 2, 0.2, o), 1);
  };
  const Tensor ref = run(0.2 / 256);
  const double e1 = max_diff(run(0.2 / 8), ref);
  const double e2 = max_diff(run(0.2 / 16), ref);
  const double e3 = max_diff(run(0.2 / 32), ref);
  CHECK(e1 / e2 >= 8.0);
  CHECK(e2 / e3 >= 8.0);
}

TEST_CASE("diffusion-sorption solver") {
  const std::size_t n = 64;
  SUBCASE("heat kernel without retardation") {
    SorptionParams p;
    p.retardation = false;
    p.left_value = 0.0;
    p.right_value = 0.0;
    const auto x = cell_centers(n);
    Tensor u0({n});
    for (std::size_t j = 0; j < n; ++j) u0[j] = std::sin(kPi * x[j]);
    const Tensor out = solve_diffusion_sorption(u0, p, 3, 250.0);
    for (std::size_t t = 1; t < 3; ++t) {
      double proj = 0, norm = 0;
      for (std::size_t j = 0; j < n; ++j) {
        proj += out[t * n + j] * u0[j];
        norm += u0[j] * u0[j];
      }
      const double expected = std::exp(-5e-4 * kPi * kPi * 250.0 * t);
      CHECK(proj / norm == doctest::Approx(expected).epsilon(0.01));
    }
  }
  SUBCASE("steady linear profile") {
    SorptionParams p;
    const Tensor u0 = Tensor::full({n}, 0.1);
    const Tensor out = solve_diffusion_sorption(u0, p, 2, 40000.0);
    const auto x = cell_centers(n);
    double worst = 0;
    for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(out[n + j] - (1.0 - x[j])));
    CHECK(worst < 1e-3);
  }
  SUBCASE("discrete flux balance") {
    SorptionParams p;
    p.internal_dt = 5.0;
    Tensor u0 = sample_ic_sinusoid(2, n);
    rescale_to_range(u0, 0.05, 0.3);
    const Tensor out = solve_diffusion_sorption(u0, p, 2, 5.0);
    const double dx = 1.0 / n;
    auto R = [&](double u) {
      const double ue = std::max(u, 1e-6);
      return 1.0 + (0.71 / 0.29) * 2880.0 * 3.5e-4 * 0.874 * std::pow(ue, 0.874 - 1.0);
    };
    double storage = 0;
    for (std::size_t j = 0; j < n; ++j) storage += R(u0[j]) * (out[n + j] - u0[j]) * dx / 5.0;
    const double flux = 5e-4 / dx * ((2 * 0.0 - 2 * out[n + n - 1]) - (2 * out[n] - 2 * 1.0));
    CHECK(std::abs(storage - flux) / std::abs(flux) < 1e-4);
  }
  SUBCASE("time self-convergence") {
    SorptionParams p;
    Tensor u0 = sample_ic_sinusoid(3, n);
    rescale_to_range(u0, 0.0, 0.2);
    auto run = [&](double h) {
      SorptionParams q = p;
      q.internal_dt = h;
      return frame_of(solve_diffusion_sorption(u0, q, 2, 20.0), 1);
    };
    const Tensor ref = run(20.0 / 512);
    const double e1 = max_diff(run(20.0 / 4), ref), e2 = max_diff(run(20.0 / 8), ref);
    CHECK(e1 / e2 >= std::pow(2.0, 0.5));
  }
}

TEST_CASE("reaction-diffusion 1D") {
  const std::size_t n = 64;
  const Tensor zero({n});
  const Tensor ones = Tensor::full({n}, 1.0);
  CHECK(solve_reaction_diffusion_1d(zero, 0.5, 1.0, 5, 0.05).max_abs() == 0.0);
  const Tensor o = solve_reaction_diffusion_1d(ones, 0.5, 1.0, 5, 0.05);
  for (double v : o.data()) CHECK(std::abs(v - 1.0) < 1e-14);

  Tensor u0 = sample_ic_sinusoid(5, n);
  rescale_to_range(u0, 0.0, 1.0);
  const Tensor ode = solve_reaction_diffusion_1d(u0, 0.0, 1.0, 21, 0.05);
  double worst = 0;
  for (std::size_t t = 0; t < 21; ++t) {
    const double e = std::exp(1.0 * 0.05 * t);
    for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(ode[t * n + j] - u0[j] * e / (1 + u0[j] * (e - 1))));
  }
  CHECK(worst < 1e-10);

  const Tensor full = solve_reaction_diffusion_1d(u0, 0.5, 1.0, 21, 0.05);
  double prev_mean = -1;
  for (std::size_t t = 0; t < 21; ++t) {
    double mean = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = full[t * n + j];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      mean += v;
    }
    CHECK(mean > prev_mean);
    prev_mean = mean;
  }
  ReactionDiffusion1DOptions fine;
  fine.internal_dt = 0.05 / 200;
  const Tensor ref = solve_reaction_diffusion_1d(u0, 0.5, 1.0, 21, 0.05, fine);
  CHECK(max_diff(full, ref) < 1e-3);

  auto run = [&](double h) {
    ReactionDiffusion1DOptions o;
    o.internal_dt = h;
    return frame_of(solve_reaction_diffusion_1d(u0, 0.01, 1.0, 2, 0.4, o), 1);
  };
  const Tensor r2 = run(0.4 / 512);
  const double e1 = max_diff(run(0.4 / 4), r2), e2 = max_diff(run(0.4 / 8), r2);
  CHECK(e1 / e2 >= std::pow(2.0, 1.5));
}

TEST_CASE("reaction-diffusion 2D") {
  const std::size_t n = 16;
  const double k = 5e-3;
  const double u1 = -std::cbrt(k);
  Tensor eq({2, n, n});
  for (std::size_t i = 0; i < n * n; ++i) {
    eq[i] = u1;
    eq[n * n + i] = u1;
  }
  const Tensor out = solve_reaction_diffusion_2d(eq, 1e-3, 5e-3, k, 11, 0.5);
  CHECK(max_diff(frame_of(out, 10), eq.reshaped({2 * n * n})) < 1e-8);

  Tensor u0({2, n, n});
  const Tensor a = sample_ic_grf(1, n, 0.2), b = sample_ic_grf(2, n, 0.2);
  for (std::size_t i = 0; i < n * n; ++i) {
    u0[i] = 0.5 * a[i];
    u0[n * n + i] = 0.5 * b[i];
  }
  ReactionDiffusion2DOptions o;
  o.internal_dt = 1e-4;
  const Tensor ode = solve_reaction_diffusion_2d(u0, 0.0, 0.0, k, 2, 0.5, o);
  // Classical RK4 at a much finer step as the per-cell oracle.
  double worst = 0;
  for (std::size_t i = 0; i < n * n; ++i) {
    double x = u0[i], y = u0[n * n + i];
    auto f = [k](double p, double q) { return std::pair{p - p * p * p - k - q, p - q}; };
    const double h = 1e-4;
    for (int s = 0; s < 5000; ++s) {
      auto [k1x, k1y] = f(x, y);
      auto [k2x, k2y] = f(x + 0.5 * h * k1x, y + 0.5 * h * k1y);
      auto [k3x, k3y] = f(x + 0.5 * h * k2x, y + 0.5 * h * k2y);
      auto [k4x, k4y] = f(x + h * k3x, y + h * k3y);
      x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
      y += h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y);
    }
    worst = std::max({worst, std::abs(ode[2 * n * n + i] - x), std::abs(ode[3 * n * n + i] - y)});
  }
  CHECK(worst < 1e-6);

  // Resolution convergence: coarse cells against the average of their fine children.
  auto smooth = [](std::size_t m) {
    Tensor u({2, m, m});
    const auto x = cell_centers(m, -1.0, 1.0);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        u[r * m + c] = 0.5 * std::cos(kPi * x[c]) * std::cos(kPi * x[r]);
        u[m * m + r * m + c] = 0.3 * std::cos(kPi * x[c]);
      }
    }
    return u;
  };
  const Tensor coarse = solve_reaction_diffusion_2d(smooth(32), 1e-3, 5e-3, k, 2, 0.1);
  const Tensor fine = solve_reaction_diffusion_2d(smooth(64), 1e-3, 5e-3, k, 2, 0.1);
  double dev = 0;
  for (std::size_t ch = 0; ch < 2; ++ch) {
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t c = 0; c < 32; ++c) {
        const std::size_t base = 2 * 64 * 64 + ch * 64 * 64;
        const double avg = 0.25 * (fine[base + 2 * r * 64 + 2 * c] + fine[base + 2 * r * 64 + 2 * c + 1] +
                                   fine[base + (2 * r + 1) * 64 + 2 * c] + fine[base + (2 * r + 1) * 64 + 2 * c + 1]);
        dev = std::max(dev, std::abs(coarse[2 * 32 * 32 + ch * 32 * 32 + r * 32 + c] - avg));
      }
    }
  }
  CHECK(dev < 1e-2);

  auto run = [&](double h) {
    ReactionDiffusion2DOptions q;
    q.internal_dt = h;
    return frame_of(solve_reaction_diffusion_2d(u0, 1e-3, 5e-3, k, 2, 0.2, q), 1);
  };
  const Tensor r2 = run(0.2 / 512);
  const double e1 = max_diff(run(0.2 / 8), r2), e2 = max_diff(run(0.2 / 16), r2);
  CHECK(e1 / e2 >= std::pow(2.0, 1.5));
}

TEST_CASE("shallow water solver") {
  const std::size_t n = 32;
  const Tensor zero({n, n});
  const Tensor flat = Tensor::full({n, n}, 1.0);
  for (auto bc : {SweBoundary::kReflective, SweBoundary::kPeriodic}) {
    ShallowWaterParams p;
    p.boundary = bc;
    const Tensor rest = solve_shallow_water(flat, zero, zero, zero, p, 6, 0.1);
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t i = 0; i < n * n; ++i) {
        CHECK(std::abs(rest[t * 3 * n * n + i] - 1.0) <= 1e-12);
        CHECK(std::abs(rest[t * 3 * n * n + n * n + i]) <= 1e-12);
      }
    }
  }

  {
    const auto x = cell_centers(n, -2.5, 2.5);
    Tensor bump({n, n}), depth({n, n});
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        bump[r * n + c] = 0.4 * std::exp(-3.0 * ((x[c] - 0.5) * (x[c] - 0.5) + x[r] * x[r]));
        depth[r * n + c] = 1.5 - bump[r * n + c];
      }
    }
    for (auto bc : {SweBoundary::kReflective, SweBoundary::kPeriodic}) {
      ShallowWaterParams p;
      p.boundary = bc;
      const Tensor lake = solve_shallow_water(depth, zero, zero, bump, p, 8, 0.2);
      double worst = 0;
      for (std::size_t t = 0; t < 8; ++t) {
        for (std::size_t i = 0; i < n * n; ++i) {
          worst = std::max(worst, std::abs(lake[t * 3 * n * n + i] - depth[i]));
          worst = std::max(worst, std::abs(lake[t * 3 * n * n + n * n + i]));
          worst = std::max(worst, std::abs(lake[t * 3 * n * n + 2 * n * n + i]));
        }
      }
      CHECK(worst <= 1e-12);
    }
  }

  auto dam = [&](std::size_t m) {
    const auto x = cell_centers(m, -2.5, 2.5);
    Tensor h({m, m});
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) h[r * m + c] = std::hypot(x[c], x[r]) < 0.5 ? 2.0 : 1.0;
    }
    return h;
  };
  ShallowWaterParams periodic;
  periodic.boundary = SweBoundary::kPeriodic;
  const Tensor h0 = dam(n);
  const Tensor pw = solve_shallow_water(h0, zero, zero, zero, periodic, 11, 0.1);
  const double mass0 = h0.sum();
  for (std::size_t t = 0; t < 11; ++t) {
    double m = 0;
    for (std::size_t i = 0; i < n * n; ++i) m += pw[t * 3 * n * n + i];
    CHECK(std::abs(m - mass0) / mass0 < 1e-10);
  }

  ShallowWaterParams refl;
  const Tensor rw = solve_shallow_water(h0, zero, zero, zero, refl, 11, 0.1);
  double asym = 0;
  for (std::size_t t = 0; t < 11; ++t) {
    const double* f = rw.ptr() + t * 3 * n * n;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        // (x, y) -> (-y, x) maps (r, c) to (c, n-1-r) and (u1, u2) to (-u2, u1).
        const std::size_t a = r * n + c, b = c * n + (n - 1 - r);
        asym = std::max(asym, std::abs(f[a] - f[b]));
        asym = std::max(asym, std::abs(f[n * n + b] + f[2 * n * n + a]));
        asym = std::max(asym, std::abs(f[2 * n * n + b] - f[n * n + a]));
      }
    }
  }
  CHECK(asym < 1e-8);

  Tensor bad = flat;
  bad[3] = 0.0;
  CHECK_THROWS_AS(solve_shallow_water(bad, zero, zero, zero, refl, 2, 0.1), NumericalError);

  // Forward-Euler time order against a fine-CFL reference (smooth IC).
  Tensor smooth({n, n});
  const auto x = cell_centers(n, -2.5, 2.5);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) smooth[r * n + c] = 1.0 + 0.2 * std::exp(-(x[c] * x[c] + x[r] * x[r]));
  }
  auto run = [&](double cfl) {
    ShallowWaterParams q = periodic;
    q.cfl = cfl;
    return frame_of(solve_shallow_water(smooth, zero, zero, zero, q, 2, 0.3), 1);
  };
  const Tensor ref = run(0.4 / 64);
  const double e1 = max_diff(run(0.4 / 2), ref), e2 = max_diff(run(0.4 / 4), ref);
  CHECK(e1 / e2 >= std::pow(2.0, 0.5));
}

TEST_CASE("trajectory generation and container") {
  for (auto f : {Family::kAdvection, Family::kBurgers, Family::kDiffusionSorption, Family::kReactionDiffusion1D,
                 Family::kReactionDiffusion2D, Family::kShallowWater}) {
    GenSpec spec;
    spec.family = f;
    spec.n = 16;
    spec.num_traj = 3;
    spec.timesteps = 5;
    spec.seed = 42;
    const TrajectorySet s = generate_family(spec);
    CAPTURE(family_name(f));
    CHECK(s.data.size() == 3 * 5 * s.channels.size() * (s.dim == 1 ? 16 : 256));
    CHECK_NOTHROW(s.validate());
    CHECK(parse_family(family_name(f)) == f);
    const TrajectorySet again = generate_family(spec);
    CHECK(again.data == s.data);
    spec.num_traj = 1;
    const TrajectorySet one = generate_family(spec);
    CHECK(std::equal(one.data.begin(), one.data.end(), s.data.begin()));
  }
  CHECK_THROWS_AS(parse_family("navier"), ConfigError);

  GenSpec spec;
  spec.family = Family::kBurgers;
  spec.n = 32;
  spec.num_traj = 2;
  spec.timesteps = 4;
  spec.coefficients = {{"nu", 0.01}};
  const TrajectorySet s = generate_family(spec);
  CHECK(s.coefficients.at("nu") == 0.01);
  const auto path = std::filesystem::temp_directory_path() / "unipde_traj_test.upst";
  write_trajectories(s, path);
  const TrajectorySet back = read_trajectories(path);
  CHECK(back.data == s.data);
  CHECK(back.channels == s.channels);
  CHECK(back.coefficients == s.coefficients);
  CHECK(back.dt == s.dt);
  const TrajectorySet head = read_trajectory_header(path);
  CHECK(head.data.empty());
  CHECK(head.timesteps == 4);
  CHECK(head.n == 32);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 7);
  CHECK_THROWS_AS(read_trajectories(path), FormatError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "UPSX garbage";
  }
  CHECK_THROWS_AS(read_trajectories(path), FormatError);
  std::filesystem::remove(path);
}
