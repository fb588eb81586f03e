// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

// Reference implementations used as test oracles. Everything here is
// written independently of the library code it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "unipde/gradkit/ops.hpp"
#include "unipde/gradkit/tape.hpp"
#include "unipde/gradkit/tensor.hpp"

namespace testsupport {

using unipde::gk::Shape;
using unipde::gk::Tape;
using unipde::gk::Tensor;
using unipde::gk::Var;

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = d(rng);
  return t;
}

inline Tensor random_complex(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor t(shape, unipde::gk::DType::kComplex);
  for (double& v : t.data()) v = d(rng);
  return t;
}

/// O(n^4) 2D DFT of one real or complex plane, e^{-2 pi i (kr r + kc c)/n}.
inline std::vector<std::complex<double>> direct_dft2(const std::vector<std::complex<double>>& x, std::size_t n,
                                                     bool inverse = false) {
  std::vector<std::complex<double>> out(n * n);
  const double sgn = inverse ? 1.0 : -1.0;
  for (std::size_t kr = 0; kr < n; ++kr) {
    for (std::size_t kc = 0; kc < n; ++kc) {
      std::complex<double> acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          const double ang = sgn * 2.0 * std::numbers::pi * static_cast<double>((kr * r + kc * c) % n) / static_cast<double>(n);
          acc += x[r * n + c] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      }
      out[kr * n + kc] = acc;
    }
  }
  return out;
}

/// Reference spectral convolution: full DFT, per-mode channel mixing on the
/// retained corner blocks (kept Hermitian), inverse DFT, real part.
/// w[ci][co][2m][m] complex, x[ci][n][n] real -> [co][n][n].
inline std::vector<double> reference_spectral_conv(const Tensor& x, const Tensor& w, std::size_t n, std::size_t m) {
  const std::size_t ci = x.dim(0), co = w.dim(1);
  std::vector<std::vector<std::complex<double>>> xs(ci);
  for (std::size_t i = 0; i < ci; ++i) {
    std::vector<std::complex<double>> plane(n * n);
    for (std::size_t k = 0; k < n * n; ++k) plane[k] = x[i * n * n + k];
    xs[i] = direct_dft2(plane, n);
  }
  std::vector<double> out(co * n * n, 0.0);
  auto row_of = [&](std::size_t r) { return r < m ? r : n - 2 * m + r; };
  for (std::size_t o = 0; o < co; ++o) {
    std::vector<std::complex<double>> spec(n * n, 0.0);
    for (std::size_t r = 0; r < 2 * m; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < ci; ++i) {
          acc += xs[i][row_of(r) * n + c] * w.cget(((i * co + o) * 2 * m + r) * m + c);
        }
        spec[row_of(r) * n + c] += acc;
        // Mirror onto the conjugate mode so the inverse transform is real.
        if (c > 0) {
          const std::size_t rr = (n - row_of(r)) % n, cc = n - c;
          spec[rr * n + cc] += std::conj(acc);
        }
      }
    }
    const auto y = direct_dft2(spec, n, true);
    for (std::size_t k = 0; k < n * n; ++k) out[o * n * n + k] = y[k].real() / static_cast<double>(n * n);
  }
  return out;
}

/// Relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0.0 ? 0.0 : std::sqrt(d) / den;
}

using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Worst relative error between tape gradients and central differences over
/// all inputs. Each input is registered as a trainable parameter.
inline double gradient_error(const LossBuilder& build, std::vector<Tensor> inputs, double h = 1e-6) {
  auto run = [&](bool grads, std::map<std::string, Tensor>* out) {
    Tape tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.param("in" + std::to_string(i), inputs[i]));
    Var loss = build(tape, vars);
    if (grads) *out = tape.backward(loss);
    return loss.value()[0];
  };
  std::map<std::string, Tensor> analytic;
  run(true, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto d = inputs[i].data();
    std::vector<double> num(d.size()), an(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double orig = d[k];
      d[k] = orig + h;
      const double fp = run(false, nullptr);
      d[k] = orig - h;
      const double fm = run(false, nullptr);
      d[k] = orig;
      num[k] = (fp - fm) / (2.0 * h);
      an[k] = analytic.at("in" + std::to_string(i)).data()[k];
    }
    worst = std::max(worst, rel_error(an, num));
  }
  return worst;
}

/// Fixed random projection to turn any tensor into a scalar loss with a
/// non-trivial gradient.
inline Var project(Var x, std::uint64_t seed) {
  const Tensor& v = x.value();
  Tensor w = v.is_complex() ? random_complex(v.shape(), seed) : random_tensor(v.shape(), seed);
  if (v.is_complex()) {
    Var r = unipde::gk::real(unipde::gk::cmul(x, x.tape->constant(w)));
    return unipde::gk::sum(r);
  }
  return unipde::gk::sum(unipde::gk::mul_const(x, w));
}

using ParamLoss = std::function<Var(Tape&, const std::map<std::string, Tensor>&)>;

/// Central differences on up to per_tensor randomly chosen entries of every
/// parameter tensor. build must register the parameters by name on the tape.
/// Returns the worst per-tensor relative error; worst_name receives its key.
/// Tensors whose gradient is tiny next to the largest one (e.g. key biases,
/// which softmax shift invariance makes vanish analytically) are measured
/// against floor_ratio times the largest per-tensor gradient norm instead of
/// their own norm.
inline double sampled_gradient_error(const ParamLoss& build, std::map<std::string, Tensor>& params,
                                     std::size_t per_tensor, std::uint64_t seed, double h = 1e-6,
                                     std::string* worst_name = nullptr, double floor_ratio = 1e-3) {
  std::map<std::string, Tensor> analytic;
  {
    Tape tape;
    analytic = tape.backward(build(tape, params));
  }
  double largest = 0.0;
  for (const auto& [name, g] : analytic) largest = std::max(largest, g.norm2());
  const double abs_floor = floor_ratio * largest;
  auto eval = [&] {
    Tape tape;
    return build(tape, params).value()[0];
  };
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (auto& [name, tensor] : params) {
    auto d = tensor.data();
    std::vector<std::size_t> idx;
    if (d.size() <= per_tensor) {
      for (std::size_t k = 0; k < d.size(); ++k) idx.push_back(k);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
      for (std::size_t k = 0; k < per_tensor; ++k) idx.push_back(pick(rng));
    }
    const auto it = analytic.find(name);
    std::vector<double> num, an;
    for (std::size_t k : idx) {
      const double orig = d[k];
      d[k] = orig + h;
      const double fp = eval();
      d[k] = orig - h;
      const double fm = eval();
      d[k] = orig;
      num.push_back((fp - fm) / (2.0 * h));
      an.push_back(it == analytic.end() ? 0.0 : it->second.data()[k]);
    }
    double diff = 0, na = 0, nn = 0;
    for (std::size_t k = 0; k < an.size(); ++k) {
      diff += (an[k] - num[k]) * (an[k] - num[k]);
      na += an[k] * an[k];
      nn += num[k] * num[k];
    }
    const double err = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), abs_floor});
    if (err > worst) {
      worst = err;
      if (worst_name) *worst_name = name;
    }
  }
  return worst;
}

}  // namespace testsupport
