// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/pdegen/solvers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "unipde/common.hpp"
#include "unipde/gradkit/fft.hpp"

namespace unipde::pde {
namespace {

using gk::cplx;
constexpr double kPi = std::numbers::pi;

double kfreq(std::size_t i, std::size_t n) {
  return i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
}

std::size_t substeps_for(double dt, double internal_dt, double limit) {
  if (internal_dt > 0.0) return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dt / internal_dt)));
  if (!(limit > 0.0) || !std::isfinite(limit)) return 1;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / limit - 1e-12)));
}

void require_1d(const gk::Tensor& u0, const char* who) {
  if (u0.rank() != 1 || u0.is_complex()) {
    throw std::invalid_argument(std::string(who) + ": expects a real 1D field, got " + gk::shape_str(u0.shape()));
  }
}

void require_steps(std::size_t steps, double dt, const char* who) {
  if (steps < 1) throw std::invalid_argument(std::string(who) + ": steps must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument(std::string(who) + ": dt must be positive");
}

void store_frame(gk::Tensor& out, std::size_t frame, const std::vector<double>& u) {
  std::copy(u.begin(), u.end(), out.ptr() + frame * u.size());
}

std::vector<cplx> to_spectrum(const std::vector<double>& u) {
  std::vector<cplx> s(u.begin(), u.end());
  gk::fft_inplace(s, false);
  return s;
}

std::vector<double> from_spectrum(std::vector<cplx> s) {
  gk::fft_inplace(s, true);
  const double inv = 1.0 / static_cast<double>(s.size());
  std::vector<double> u(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) u[i] = s[i].real() * inv;
  return u;
}

}  // namespace

gk::Tensor solve_advection(const gk::Tensor& u0, double beta, std::size_t steps, double dt) {
  require_1d(u0, "solve_advection");
  require_steps(steps, dt, "solve_advection");
  const std::size_t n = u0.numel();
  if (!is_pow2(n)) throw std::invalid_argument("solve_advection: n must be a power of two");
  const std::vector<double> init(u0.data().begin(), u0.data().end());
  const auto spec = to_spectrum(init);
  gk::Tensor out({steps, 1, n});
  for (std::size_t s = 0; s < steps; ++s) {
    const double shift = beta * dt * static_cast<double>(s);
    std::vector<cplx> cur(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double k = kfreq(i, n);
      const double ang = -2.0 * kPi * k * shift;
      // The Nyquist mode of a real signal only carries a cosine component.
      const cplx mult = (i == n / 2 && n > 1) ? cplx(std::cos(ang), 0.0) : cplx(std::cos(ang), std::sin(ang));
      cur[i] = spec[i] * mult;
    }
    store_frame(out, s, from_spectrum(std::move(cur)));
  }
  return out;
}

gk::Tensor solve_burgers(const gk::Tensor& u0, double nu, std::size_t steps, double dt, const BurgersOptions& opts) {
  require_1d(u0, "solve_burgers");
  require_steps(steps, dt, "solve_burgers");
  if (!(nu > 0.0)) throw std::invalid_argument("solve_burgers: viscosity must be positive");
  const std::size_t n = u0.numel();
  if (!is_pow2(n)) throw std::invalid_argument("solve_burgers: n must be a power of two");
  const double dx = 1.0 / static_cast<double>(n);
  const std::size_t kcut = n / 3;
  std::vector<double> wave(n), lin(n), mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = kfreq(i, n);
    wave[i] = (i == n / 2) ? 0.0 : 2.0 * kPi * k;
    lin[i] = -(nu / kPi) * (2.0 * kPi * k) * (2.0 * kPi * k);
    mask[i] = std::abs(k) <= static_cast<double>(kcut) ? 1.0 : 0.0;
  }
  auto nonlinear = [&](const std::vector<cplx>& s) {
    std::vector<cplx> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = s[i] * mask[i];
    auto u = from_spectrum(std::move(v));
    for (double& x : u) x = 0.5 * x * x;
    auto w = to_spectrum(u);
    for (std::size_t i = 0; i < n; ++i) w[i] = cplx(0.0, -wave[i]) * w[i] * mask[i];
    return w;
  };

  std::vector<double> u(u0.data().begin(), u0.data().end());
  std::vector<cplx> s = to_spectrum(u);
  gk::Tensor out({steps, 1, n});
  store_frame(out, 0, u);
  std::vector<cplx> e_full(n), e_half(n), tmp(n);
  double cached_h = -1.0;
  for (std::size_t frame = 1; frame < steps; ++frame) {
    double umax = 0.0;
    for (double x : u) umax = std::max(umax, std::abs(x));
    const std::size_t m = substeps_for(dt, opts.internal_dt, opts.cfl * dx / std::max(umax, 1e-12));
    const double h = dt / static_cast<double>(m);
    if (h != cached_h) {
      for (std::size_t i = 0; i < n; ++i) {
        e_full[i] = std::exp(lin[i] * h);
        e_half[i] = std::exp(lin[i] * h * 0.5);
      }
      cached_h = h;
    }
    for (std::size_t step = 0; step < m; ++step) {
      const auto k1 = nonlinear(s);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = e_half[i] * (s[i] + 0.5 * h * k1[i]);
      const auto k2 = nonlinear(tmp);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = e_half[i] * s[i] + 0.5 * h * k2[i];
      const auto k3 = nonlinear(tmp);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = e_full[i] * s[i] + h * e_half[i] * k3[i];
      const auto k4 = nonlinear(tmp);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = e_full[i] * s[i] + (h / 6.0) * (e_full[i] * k1[i] + 2.0 * e_half[i] * (k2[i] + k3[i]) + k4[i]);
      }
    }
    u = from_spectrum(s);
    for (double x : u) {
      if (!std::isfinite(x) || std::abs(x) > 1e6) {
        std::ostringstream os;
        os << "Burgers solution blew up (|u| > 1e6) at t=" << dt * static_cast<double>(frame)
           << "; lower the CFL number or set a smaller internal_dt";
        throw NumericalError(os.str());
      }
    }
    store_frame(out, frame, u);
  }
  return out;
}

double retardation_factor(double u, const SorptionParams& p) {
  if (!p.retardation) return 1.0;
  const double ue = std::max(u, p.u_floor);
  return 1.0 + ((1.0 - p.porosity) / p.porosity) * p.rho_s * p.k_f * p.n_f * std::pow(ue, p.n_f - 1.0);
}

gk::Tensor solve_diffusion_sorption(const gk::Tensor& u0, const SorptionParams& p, std::size_t steps, double dt) {
  require_1d(u0, "solve_diffusion_sorption");
  require_steps(steps, dt, "solve_diffusion_sorption");
  const std::size_t n = u0.numel();
  if (n < 2) throw std::invalid_argument("solve_diffusion_sorption: need at least two cells");
  const double dx = 1.0 / static_cast<double>(n);
  const double eps = 1e-6;
  std::vector<double> u(u0.data().begin(), u0.data().end());
  gk::Tensor out({steps, 1, n});
  store_frame(out, 0, u);
  const std::size_t m = substeps_for(dt, p.internal_dt, 5.0 * dx * dx / p.diffusivity);
  const double h = dt / static_cast<double>(m);
  std::vector<double> lower(n), diag(n), upper(n), rhs(n), cp(n), dp(n);
  std::size_t clamps = 0;
  for (std::size_t frame = 1; frame < steps; ++frame) {
    for (std::size_t step = 0; step < m; ++step) {
      for (std::size_t j = 0; j < n; ++j) {
        const double r = p.diffusivity * h / (retardation_factor(u[j], p) * dx * dx);
        lower[j] = -r;
        upper[j] = -r;
        diag[j] = 1.0 + 2.0 * r;
        rhs[j] = u[j];
        if (j == 0) {  // ghost u_{-1} = 2 uL - u_0
          lower[j] = 0.0;
          diag[j] += r;
          rhs[j] += 2.0 * r * p.left_value;
        }
        if (j == n - 1) {
          upper[j] = 0.0;
          diag[j] += r;
          rhs[j] += 2.0 * r * p.right_value;
        }
      }
      // Thomas algorithm
      cp[0] = upper[0] / diag[0];
      dp[0] = rhs[0] / diag[0];
      for (std::size_t j = 1; j < n; ++j) {
        const double den = diag[j] - lower[j] * cp[j - 1];
        cp[j] = upper[j] / den;
        dp[j] = (rhs[j] - lower[j] * dp[j - 1]) / den;
      }
      u[n - 1] = dp[n - 1];
      for (std::size_t j = n - 1; j-- > 0;) u[j] = dp[j] - cp[j] * u[j + 1];
      for (double& x : u) {
        if (!std::isfinite(x)) throw NumericalError("diffusion-sorption produced a non-finite value");
        if (x < -eps || x > 1.0 + eps) {
          if (x < -1e-2 || x > 1.0 + 1e-2) {
            throw NumericalError("diffusion-sorption state persistently left [0, 1]; check boundary values and IC");
          }
          x = std::clamp(x, 0.0, 1.0);
          ++clamps;
        }
      }
    }
    store_frame(out, frame, u);
  }
  if (clamps > 0) log_warn("diffusion-sorption: clamped " + std::to_string(clamps) + " values to [0, 1]");
  return out;
}

gk::Tensor solve_reaction_diffusion_1d(const gk::Tensor& u0, double nu, double rho, std::size_t steps, double dt,
                                       const ReactionDiffusion1DOptions& opts) {
  require_1d(u0, "solve_reaction_diffusion_1d");
  require_steps(steps, dt, "solve_reaction_diffusion_1d");
  const std::size_t n = u0.numel();
  if (!is_pow2(n)) throw std::invalid_argument("solve_reaction_diffusion_1d: n must be a power of two");
  const double dx = 1.0 / static_cast<double>(n);
  const std::size_t m = substeps_for(dt, opts.internal_dt, opts.max_internal_dt);
  const double h = dt / static_cast<double>(m);
  const double eh = std::exp(rho * h * 0.5);
  std::vector<double> decay(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sin(kPi * static_cast<double>(i) / static_cast<double>(n));
    decay[i] = std::exp(-nu * 4.0 * s * s / (dx * dx) * h);
  }
  auto logistic = [eh](std::vector<double>& u) {
    for (double& x : u) x = x * eh / (1.0 + x * (eh - 1.0));
  };
  std::vector<double> u(u0.data().begin(), u0.data().end());
  gk::Tensor out({steps, 1, n});
  store_frame(out, 0, u);
  for (std::size_t frame = 1; frame < steps; ++frame) {
    for (std::size_t step = 0; step < m; ++step) {
      logistic(u);
      if (nu != 0.0) {
        auto s = to_spectrum(u);
        for (std::size_t i = 0; i < n; ++i) s[i] *= decay[i];
        u = from_spectrum(std::move(s));
        // The semi-discrete heat flow maps [0, 1] into itself; strip FFT roundoff.
        for (double& x : u) {
          if (x < 0.0 && x > -1e-12) x = 0.0;
          if (x > 1.0 && x < 1.0 + 1e-12) x = 1.0;
        }
      }
      logistic(u);
    }
    for (double x : u) {
      if (!std::isfinite(x)) throw NumericalError("reaction-diffusion 1D produced NaN");
    }
    store_frame(out, frame, u);
  }
  return out;
}

gk::Tensor solve_reaction_diffusion_2d(const gk::Tensor& u0, double nu1, double nu2, double k, std::size_t steps,
                                       double dt, const ReactionDiffusion2DOptions& opts) {
  require_steps(steps, dt, "solve_reaction_diffusion_2d");
  if (u0.rank() != 3 || u0.dim(0) != 2 || u0.dim(1) != u0.dim(2)) {
    throw std::invalid_argument("solve_reaction_diffusion_2d: expects [2 x n x n], got " + gk::shape_str(u0.shape()));
  }
  const std::size_t n = u0.dim(1);
  const std::size_t nn = n * n;
  const double dx = opts.domain_length / static_cast<double>(n);
  const double idx2 = 1.0 / (dx * dx);
  auto lap = [n, idx2](const double* u, std::size_t r, std::size_t c) {
    const double x = u[r * n + c];
    const double up = r > 0 ? u[(r - 1) * n + c] : x;
    const double dn = r + 1 < n ? u[(r + 1) * n + c] : x;
    const double lf = c > 0 ? u[r * n + c - 1] : x;
    const double rt = c + 1 < n ? u[r * n + c + 1] : x;
    return (up + dn + lf + rt - 4.0 * x) * idx2;
  };
  auto rhs = [&](const std::vector<double>& s, std::vector<double>& f) {
    const double* a = s.data();
    const double* b = s.data() + nn;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t i = r * n + c;
        f[i] = nu1 * lap(a, r, c) + a[i] - a[i] * a[i] * a[i] - k - b[i];
        f[nn + i] = nu2 * lap(b, r, c) + a[i] - b[i];
      }
    }
  };
  std::vector<double> s(u0.data().begin(), u0.data().end()), f1(2 * nn), f2(2 * nn), mid(2 * nn);
  gk::Tensor out({steps, 2, n, n});
  store_frame(out, 0, s);
  const double numax = std::max(nu1, nu2);
  for (std::size_t frame = 1; frame < steps; ++frame) {
    double amax = 0.0;
    for (std::size_t i = 0; i < nn; ++i) amax = std::max(amax, std::abs(s[i]));
    double limit = 0.5 / (1.0 + 3.0 * amax * amax);
    if (numax > 0.0) limit = std::min(limit, dx * dx / (8.0 * numax));
    const std::size_t m = substeps_for(dt, opts.internal_dt, limit);
    const double h = dt / static_cast<double>(m);
    for (std::size_t step = 0; step < m; ++step) {
      rhs(s, f1);
      for (std::size_t i = 0; i < 2 * nn; ++i) mid[i] = s[i] + h * f1[i];
      rhs(mid, f2);
      for (std::size_t i = 0; i < 2 * nn; ++i) s[i] += 0.5 * h * (f1[i] + f2[i]);
    }
    for (double x : s) {
      if (!std::isfinite(x) || std::abs(x) > 1e6) throw NumericalError("reaction-diffusion 2D blew up");
    }
    store_frame(out, frame, s);
  }
  return out;
}

gk::Tensor solve_shallow_water(const gk::Tensor& h0, const gk::Tensor& u0, const gk::Tensor& v0, const gk::Tensor& bathymetry,
                               const ShallowWaterParams& p, std::size_t steps, double dt) {
  require_steps(steps, dt, "solve_shallow_water");
  if (h0.rank() != 2 || h0.dim(0) != h0.dim(1) || !h0.same_shape(u0) || !h0.same_shape(v0) || !h0.same_shape(bathymetry)) {
    throw std::invalid_argument("solve_shallow_water: h, u, v, b must share an [n x n] shape");
  }
  const std::size_t n = h0.dim(0);
  const std::size_t nn = n * n;
  const double dx = (p.domain_hi - p.domain_lo) / static_cast<double>(n);
  const double g = p.gravity;
  const bool periodic = p.boundary == SweBoundary::kPeriodic;
  for (double x : h0.data()) {
    if (!(x > 0.0)) throw NumericalError("shallow water: initial depth must be positive everywhere (dry states unsupported)");
  }
  std::vector<double> h(h0.data().begin(), h0.data().end()), hu(nn), hv(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    hu[i] = h[i] * u0[i];
    hv[i] = h[i] * v0[i];
  }
  gk::Tensor out({steps, 3, n, n});
  auto store = [&](std::size_t frame) {
    double* o = out.ptr() + frame * 3 * nn;
    for (std::size_t i = 0; i < nn; ++i) {
      o[i] = h[i];
      o[nn + i] = hu[i] / h[i];
      o[2 * nn + i] = hv[i] / h[i];
    }
  };
  store(0);

  // Face fluxes: fx[r][c] is the flux through the face between cell c-1 and
  // c (c in [0, n]); fy likewise along rows. Each face stores the flux seen
  // by its left (lo) and right (hi) cell; they differ by the hydrostatic
  // pressure correction that balances the bathymetry slope.
  struct FaceFlux {
    std::array<double, 3> lo, hi;
  };
  std::vector<FaceFlux> fx((n + 1) * n), fy((n + 1) * n);
  struct State {
    double h, u, v, b;
  };
  auto cell = [&](std::size_t i) { return State{h[i], hu[i] / h[i], hv[i] / h[i], bathymetry[i]}; };
  auto neighbor = [&](long r, long c, bool xdir) {
    const long ln = static_cast<long>(n);
    if (periodic) return cell(static_cast<std::size_t>(((r + ln) % ln) * ln + (c + ln) % ln));
    const long rr = std::clamp(r, 0L, ln - 1), cc = std::clamp(c, 0L, ln - 1);
    State s = cell(static_cast<std::size_t>(rr * ln + cc));
    if (rr != r || cc != c) {
      if (xdir) s.u = -s.u;
      else s.v = -s.v;
    }
    return s;
  };
  // Rusanov flux between hydrostatically reconstructed states; normal
  // velocity is u when xdir, v otherwise.
  auto face = [g](const State& L, const State& R, bool xdir, double alpha) {
    const double top = std::max(L.b, R.b);
    const double hl = std::max(0.0, L.h + L.b - top), hr = std::max(0.0, R.h + R.b - top);
    auto flux = [&](double hh, const State& s) {
      const double un = xdir ? s.u : s.v;
      std::array<double, 3> f{hh * un, hh * s.u * un, hh * s.v * un};
      f[xdir ? 1 : 2] += 0.5 * g * hh * hh;
      return f;
    };
    const auto fl = flux(hl, L), fr = flux(hr, R);
    const std::array<double, 3> ul{hl, hl * L.u, hl * L.v}, ur{hr, hr * R.u, hr * R.v};
    FaceFlux out;
    for (int q = 0; q < 3; ++q) out.lo[q] = out.hi[q] = 0.5 * (fl[q] + fr[q]) - 0.5 * alpha * (ur[q] - ul[q]);
    const int m = xdir ? 1 : 2;
    out.lo[m] += 0.5 * g * (L.h * L.h - hl * hl);
    out.hi[m] += 0.5 * g * (R.h * R.h - hr * hr);
    return out;
  };

  double t_in_frame = 0.0;
  std::size_t frame = 1;
  while (frame < steps) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < nn; ++i) {
      const double c = std::sqrt(g * h[i]);
      alpha = std::max({alpha, std::abs(hu[i] / h[i]) + c, std::abs(hv[i] / h[i]) + c});
    }
    double step = p.cfl * dx / alpha;
    bool frame_done = false;
    if (t_in_frame + step >= dt * (1.0 - 1e-12)) {
      step = dt - t_in_frame;
      frame_done = true;
    }
    const long ln = static_cast<long>(n);
    for (long r = 0; r < ln; ++r) {
      for (long c = 0; c <= ln; ++c) {
        fx[static_cast<std::size_t>(r * (ln + 1) + c)] = face(neighbor(r, c - 1, true), neighbor(r, c, true), true, alpha);
      }
    }
    for (long c = 0; c < ln; ++c) {
      for (long r = 0; r <= ln; ++r) {
        fy[static_cast<std::size_t>(c * (ln + 1) + r)] = face(neighbor(r - 1, c, false), neighbor(r, c, false), false, alpha);
      }
    }
    const double lam = step / dx;
    for (long r = 0; r < ln; ++r) {
      for (long c = 0; c < ln; ++c) {
        const std::size_t i = static_cast<std::size_t>(r * ln + c);
        const auto& fw = fx[static_cast<std::size_t>(r * (ln + 1) + c)].hi;
        const auto& fe = fx[static_cast<std::size_t>(r * (ln + 1) + c + 1)].lo;
        const auto& fs = fy[static_cast<std::size_t>(c * (ln + 1) + r)].hi;
        const auto& fn = fy[static_cast<std::size_t>(c * (ln + 1) + r + 1)].lo;
        h[i] -= lam * ((fe[0] - fw[0]) + (fn[0] - fs[0]));
        hu[i] -= lam * ((fe[1] - fw[1]) + (fn[1] - fs[1]));
        hv[i] -= lam * ((fe[2] - fw[2]) + (fn[2] - fs[2]));
      }
    }
    for (double x : h) {
      if (!(x > 0.0) || !std::isfinite(x)) throw NumericalError("shallow water: depth became non-positive or non-finite");
    }
    t_in_frame += step;
    if (frame_done) {
      store(frame);
      ++frame;
      t_in_frame = 0.0;
    }
  }
  return out;
}

}  // namespace unipde::pde
