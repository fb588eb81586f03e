// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/gradkit/fft.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "unipde/common.hpp"

namespace unipde::gk {
namespace {

struct Plan {
  std::vector<std::size_t> bitrev;
  std::vector<cplx> twiddle;  // exp(-2 pi i k / n), k < n/2
};

std::shared_ptr<const Plan> plan_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const Plan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto p = std::make_shared<Plan>();
  p->bitrev.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
    p->bitrev[i] = r;
  }
  p->twiddle.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    p->twiddle[k] = {std::cos(ang), std::sin(ang)};
  }
  cache.emplace(n, p);
  return p;
}

void require_pow2(std::size_t n) {
  if (!is_pow2(n)) throw std::invalid_argument("FFT length must be a power of two, got " + std::to_string(n));
}

}  // namespace

void fft_inplace(std::span<cplx> a, bool inverse) {
  const std::size_t n = a.size();
  require_pow2(n);
  if (n == 1) return;
  const auto plan = plan_for(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = plan->bitrev[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        cplx w = plan->twiddle[k * step];
        if (inverse) w = std::conj(w);
        const cplx u = a[start + k];
        const cplx v = a[start + k + half] * w;
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
}

void fft_strided(cplx* base, std::size_t n, std::size_t stride, bool inverse) {
  if (stride == 1) {
    fft_inplace(std::span<cplx>(base, n), inverse);
    return;
  }
  std::vector<cplx> buf(n);
  for (std::size_t k = 0; k < n; ++k) buf[k] = base[k * stride];
  fft_inplace(buf, inverse);
  for (std::size_t k = 0; k < n; ++k) base[k * stride] = buf[k];
}

namespace {

Tensor fft2_impl(const Tensor& x, bool inverse) {
  if (x.rank() < 2) throw std::invalid_argument("fft2 needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t n0 = x.dim(x.rank() - 2);
  const std::size_t n1 = x.dim(x.rank() - 1);
  require_pow2(n0);
  require_pow2(n1);
  Tensor out(x.shape(), DType::kComplex);
  const std::size_t planes = x.numel() / (n0 * n1);
  auto* o = reinterpret_cast<cplx*>(out.ptr());
  if (x.is_complex()) {
    std::copy(x.data().begin(), x.data().end(), out.data().begin());
  } else {
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = {x[i], 0.0};
  }
  const double scale = inverse ? 1.0 / static_cast<double>(n0 * n1) : 1.0;
  parallel_for(planes, [&](std::size_t p) {
    cplx* plane = o + p * n0 * n1;
    for (std::size_t r = 0; r < n0; ++r) fft_inplace(std::span<cplx>(plane + r * n1, n1), inverse);
    for (std::size_t c = 0; c < n1; ++c) fft_strided(plane + c, n0, n1, inverse);
    if (inverse) {
      for (std::size_t i = 0; i < n0 * n1; ++i) plane[i] *= scale;
    }
  });
  return out;
}

}  // namespace

Tensor fft2(const Tensor& x) { return fft2_impl(x, false); }
Tensor ifft2(const Tensor& x) { return fft2_impl(x, true); }

Tensor real_part(const Tensor& x) {
  if (!x.is_complex()) return x;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[2 * i];
  return out;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

double angle(std::size_t k, std::size_t j, std::size_t n) {
  return 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
}

}  // namespace

void rfft2_truncated_batch(const double* x, std::size_t planes, std::size_t n, std::size_t modes, cplx* out) {
  require_pow2(n);
  const std::size_t m = modes;
  if (planes == 0) return;
  // Columns: Z = x * [cos | -sin], Z is [planes*n x 2m].
  RowMat col(n, 2 * m);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < m; ++c) {
      const double a = angle(c, j, n);
      col(j, c) = std::cos(a);
      col(j, m + c) = -std::sin(a);
    }
  }
  RowMat z(planes * n, 2 * m);
  z.noalias() = ConstRowMap(x, planes * n, n) * col;
  // Rows: [Fr; Fi] with F = exp(-i theta), then combine.
  RowMat row(4 * m, n);
  for (std::size_t r = 0; r < 2 * m; ++r) {
    const std::size_t k = truncated_row_freq(r, n, m);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = angle(k, j, n);
      row(r, j) = std::cos(a);
      row(2 * m + r, j) = -std::sin(a);
    }
  }
  const std::size_t sblk = 2 * m * m;
  parallel_for(planes, [&](std::size_t p) {
    RowMat prod(4 * m, 2 * m);
    prod.noalias() = row * z.middleRows(p * n, n);
    cplx* o = out + p * sblk;
    for (std::size_t r = 0; r < 2 * m; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        o[r * m + c] = {prod(r, c) - prod(2 * m + r, m + c), prod(r, m + c) + prod(2 * m + r, c)};
      }
    }
  });
}

void irfft2_truncated_batch(const cplx* spec, std::size_t planes, std::size_t n, std::size_t modes, double scale,
                            double column_weight, double* out) {
  require_pow2(n);
  const std::size_t m = modes;
  if (planes == 0) return;
  RowMat er(n, 2 * m), ei(n, 2 * m);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t r = 0; r < 2 * m; ++r) {
      const double a = angle(truncated_row_freq(r, n, m), j, n);
      er(j, r) = std::cos(a);
      ei(j, r) = std::sin(a);
    }
  }
  const std::size_t sblk = 2 * m * m;
  RowMat z(planes * n, 2 * m);
  parallel_for(planes, [&](std::size_t p) {
    RowMat ys(2 * m, 2 * m);
    const cplx* s = spec + p * sblk;
    for (std::size_t r = 0; r < 2 * m; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        ys(r, c) = s[r * m + c].real();
        ys(r, m + c) = s[r * m + c].imag();
      }
    }
    RowMat pr(n, 2 * m), qi(n, 2 * m);
    pr.noalias() = er * ys;
    qi.noalias() = ei * ys;
    auto zp = z.middleRows(p * n, n);
    zp.leftCols(m) = pr.leftCols(m) - qi.rightCols(m);
    zp.rightCols(m) = pr.rightCols(m) + qi.leftCols(m);
  });
  RowMat syn(2 * m, n);
  for (std::size_t c = 0; c < m; ++c) {
    const double w = scale * (c == 0 ? 1.0 : column_weight);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = angle(c, j, n);
      syn(c, j) = w * std::cos(a);
      syn(m + c, j) = -w * std::sin(a);
    }
  }
  RowMap(out, planes * n, n).noalias() = z * syn;
}

void rfft2_truncated_plane(const double* x, std::size_t n, std::size_t modes, cplx* out) {
  require_pow2(n);
  // Row transforms, two real rows per complex FFT. Keep columns < modes.
  std::vector<cplx> half(n * modes);
  std::vector<cplx> buf(n);
  for (std::size_t r = 0; r < n; r += 2) {
    const double* ra = x + r * n;
    const double* rb = (r + 1 < n) ? x + (r + 1) * n : nullptr;
    for (std::size_t j = 0; j < n; ++j) buf[j] = {ra[j], rb ? rb[j] : 0.0};
    fft_inplace(buf, false);
    for (std::size_t c = 0; c < modes; ++c) {
      const cplx z = buf[c];
      const cplx zc = std::conj(buf[(n - c) % n]);
      half[r * modes + c] = 0.5 * (z + zc);
      if (rb) half[(r + 1) * modes + c] = cplx(0.0, -0.5) * (z - zc);
    }
  }
  // Column transforms on the retained columns, keep low and high rows.
  for (std::size_t c = 0; c < modes; ++c) {
    for (std::size_t r = 0; r < n; ++r) buf[r] = half[r * modes + c];
    fft_inplace(buf, false);
    for (std::size_t r = 0; r < 2 * modes; ++r) out[r * modes + c] = buf[truncated_row_freq(r, n, modes)];
  }
}

void irfft2_truncated_plane(const cplx* spec, std::size_t n, std::size_t modes, double scale,
                            double column_weight, double* out) {
  require_pow2(n);
  std::vector<cplx> cols(n * modes);
  std::vector<cplx> buf(n);
  for (std::size_t c = 0; c < modes; ++c) {
    std::fill(buf.begin(), buf.end(), cplx{});
    for (std::size_t r = 0; r < 2 * modes; ++r) buf[truncated_row_freq(r, n, modes)] += spec[r * modes + c];
    fft_inplace(buf, true);
    const double w = c == 0 ? 1.0 : column_weight;
    for (std::size_t j = 0; j < n; ++j) cols[j * modes + c] = w * buf[j];
  }
  // Re(ifft(a)) == ifft(hermitian part of a); pack two rows per transform.
  for (std::size_t r = 0; r < n; r += 2) {
    const cplx* a = cols.data() + r * modes;
    const cplx* b = (r + 1 < n) ? cols.data() + (r + 1) * modes : nullptr;
    std::fill(buf.begin(), buf.end(), cplx{});
    for (std::size_t c = 0; c < modes; ++c) {
      const cplx ha = 0.5 * a[c];
      const cplx hb = b ? 0.5 * b[c] : cplx{};
      // h[k] = (v[k] + conj(v[-k])) / 2, v supported on k < modes
      buf[c] += ha + cplx(0.0, 1.0) * hb;
      const std::size_t kc = (n - c) % n;
      buf[kc] += std::conj(ha) + cplx(0.0, 1.0) * std::conj(hb);
    }
    fft_inplace(buf, true);
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = scale * buf[j].real();
      if (b) out[(r + 1) * n + j] = scale * buf[j].imag();
    }
  }
}

}  // namespace unipde::gk
