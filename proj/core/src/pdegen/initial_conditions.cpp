// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/pdegen/initial_conditions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "unipde/common.hpp"
#include "unipde/gradkit/fft.hpp"

namespace unipde::pde {

std::vector<double> cell_centers(std::size_t n, double lo, double hi) {
  std::vector<double> x(n);
  const double h = (hi - lo) / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = lo + (static_cast<double>(j) + 0.5) * h;
  return x;
}

std::vector<double> periodic_grid(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = static_cast<double>(j) / static_cast<double>(n);
  return x;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> synthesize_sinusoid(const std::vector<SineMode>& modes, const std::vector<double>& x) {
  std::vector<double> u(x.size(), 0.0);
  for (const auto& m : modes) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      u[j] += m.amplitude * std::sin(2.0 * std::numbers::pi * m.k * x[j] + m.phase);
    }
  }
  return u;
}

gk::Tensor sample_ic_sinusoid(std::uint64_t seed, std::size_t n, const SinusoidOptions& opts) {
  if (opts.num_modes < 1) throw std::invalid_argument("sample_ic_sinusoid: num_modes must be >= 1");
  if (opts.k_max < 1) throw std::invalid_argument("sample_ic_sinusoid: k_max must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> kdist(1, opts.k_max);
  std::uniform_real_distribution<double> adist(opts.amplitude_range.first, opts.amplitude_range.second);
  std::uniform_real_distribution<double> pdist(0.0, 2.0 * std::numbers::pi);
  std::vector<SineMode> modes(static_cast<std::size_t>(opts.num_modes));
  for (auto& m : modes) {
    m.k = kdist(rng);
    m.amplitude = adist(rng);
    m.phase = pdist(rng);
  }
  return gk::Tensor::from({n}, synthesize_sinusoid(modes, periodic_grid(n)));
}

gk::Tensor sample_ic_sinusoid_2d(std::uint64_t seed, std::size_t n, const SinusoidOptions& opts) {
  if (opts.num_modes < 1) throw std::invalid_argument("sample_ic_sinusoid_2d: num_modes must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> kdist(0, opts.k_max);
  std::uniform_real_distribution<double> adist(opts.amplitude_range.first, opts.amplitude_range.second);
  std::uniform_real_distribution<double> pdist(0.0, 2.0 * std::numbers::pi);
  const auto x = periodic_grid(n);
  gk::Tensor u({n, n});
  for (int j = 0; j < opts.num_modes; ++j) {
    int kx = 0, ky = 0;
    while (kx == 0 && ky == 0) {
      kx = kdist(rng);
      ky = kdist(rng);
    }
    const double a = adist(rng);
    const double ph = pdist(rng);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        u[r * n + c] += a * std::sin(2.0 * std::numbers::pi * (kx * x[c] + ky * x[r]) + ph);
      }
    }
  }
  return u;
}

void rescale_to_range(gk::Tensor& field, double lo, double hi) {
  auto d = field.data();
  const auto [mn, mx] = std::minmax_element(d.begin(), d.end());
  const double a = *mn, b = *mx;
  for (double& v : d) v = (b - a) > 0.0 ? lo + (hi - lo) * (v - a) / (b - a) : 0.5 * (lo + hi);
}

gk::Tensor grf_unstandardized(std::uint64_t seed, std::size_t n, double length_scale) {
  if (!is_pow2(n)) throw std::invalid_argument("sample_ic_grf: n must be a power of two");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  gk::Tensor noise({n, n});
  for (double& v : noise.data()) v = nd(rng);
  gk::Tensor spec = gk::fft2(noise);
  const auto freq = [n](std::size_t i) {
    return i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
  };
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double kx = 2.0 * std::numbers::pi * freq(c);
      const double ky = 2.0 * std::numbers::pi * freq(r);
      const double k2 = kx * kx + ky * ky;
      // exp of a huge negative exponent underflows to exactly 0, which is the
      // infinite-length-scale limit for every nonzero mode.
      const double filt = k2 == 0.0 ? 1.0 : std::exp(-0.5 * k2 * length_scale * length_scale);
      spec.cset(r * n + c, spec.cget(r * n + c) * filt);
    }
  }
  return gk::real_part(gk::ifft2(spec));
}

gk::Tensor sample_ic_grf(std::uint64_t seed, std::size_t n, double length_scale) {
  gk::Tensor u = grf_unstandardized(seed, n, length_scale);
  const double cnt = static_cast<double>(u.numel());
  double mean = 0.0;
  for (double v : u.data()) mean += v;
  mean /= cnt;
  double var = 0.0;
  for (double v : u.data()) var += (v - mean) * (v - mean);
  var /= cnt;
  const double sd = std::sqrt(var);
  for (double& v : u.data()) v = sd > 1e-14 * (1.0 + std::abs(mean)) ? (v - mean) / sd : 0.0;
  return u;
}

}  // namespace unipde::pde
