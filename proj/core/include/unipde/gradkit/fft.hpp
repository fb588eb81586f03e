// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "unipde/gradkit/tensor.hpp"

namespace unipde::gk {

using cplx = std::complex<double>;

/// In-place iterative radix-2 FFT. Forward uses exp(-2*pi*i*k*j/n) and is
/// unnormalized; inverse uses exp(+...) and is also unnormalized (callers
/// apply 1/n). Throws std::invalid_argument unless the length is a power of
/// two.
void fft_inplace(std::span<cplx> a, bool inverse);

/// Strided variant: transforms a[offset + k*stride] for k in [0, n).
void fft_strided(cplx* base, std::size_t n, std::size_t stride, bool inverse);

/// 2D transform over the last two axes of a tensor of shape [..., n, n].
/// Real input is promoted to complex. Forward is unnormalized; inverse
/// carries the 1/n^2 factor, so ifft2(fft2(x)) == x.
Tensor fft2(const Tensor& x);
Tensor ifft2(const Tensor& x);

/// Real part of a complex tensor.
Tensor real_part(const Tensor& x);

/// Truncated real-to-half-spectrum transform used by spectral convolution.
/// For a real plane x[n][n] returns X[2m][m] with rows {0..m-1, n-m..n-1}
/// and columns {0..m-1} of the unnormalized 2D DFT.
void rfft2_truncated_plane(const double* x, std::size_t n, std::size_t modes, cplx* out);

/// Real synthesis from a retained half spectrum Y[2m][m]:
///   y[j] = scale * sum_{r,c} w_c Re(Y[r,c] exp(+2 pi i (k_r j1 + c j2)/n))
/// with w_0 = 1 and w_c = column_weight for c >= 1.
void irfft2_truncated_plane(const cplx* spec, std::size_t n, std::size_t modes, double scale,
                            double column_weight, double* out);

/// Batched forms over contiguous planes, evaluated as dense transforms
/// restricted to the retained frequencies.
void rfft2_truncated_batch(const double* x, std::size_t planes, std::size_t n, std::size_t modes, cplx* out);
void irfft2_truncated_batch(const cplx* spec, std::size_t planes, std::size_t n, std::size_t modes, double scale,
                            double column_weight, double* out);

/// Retained row index k_r for row r of a [2m][m] truncated spectrum.
inline std::size_t truncated_row_freq(std::size_t r, std::size_t n, std::size_t modes) {
  return r < modes ? r : n - 2 * modes + r;
}

}  // namespace unipde::gk
