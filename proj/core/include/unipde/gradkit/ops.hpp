// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "unipde/gradkit/tape.hpp"
#include "unipde/gradkit/tensor.hpp"

// Differentiable operations over Tape variables. Every op checks its shape
// contract and throws std::invalid_argument with both shapes on mismatch.
// Axis arguments accept negative values counted from the end.

namespace unipde::gk {

// Elementwise, identical shapes. add/sub also accept complex operands.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Elementwise product with a non-differentiable mask or weight tensor.
Var mul_const(Var a, const Tensor& m);

/// a[m x k] * b[k x p].
Var matmul(Var a, Var b);
Var transpose(Var a);
/// x[r x in] * w[in x out] + bias[out]. bias may be an unbound Var.
Var linear(Var x, Var w, Var bias);

/// Exact (erf) GELU.
Var gelu(Var a);
Var softmax(Var a, int axis);
/// Normalises every slice along axis to zero mean and unit variance.
Var layernorm(Var a, int axis, double eps = 1e-5);
/// x * gamma + beta broadcast over the last axis.
Var affine(Var x, Var gamma, Var beta);

Var mean(Var a, int axis);
/// Sum of all elements as a [1] tensor.
Var sum(Var a);
Var reshape(Var a, Shape shape);
Var concat(const std::vector<Var>& xs, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);
/// out[i, :] = x[rows[i], :] for a rank-2 x. Backward scatter-adds.
Var gather_rows(Var x, std::vector<std::size_t> rows);

// Complex tensors.
Var cmul(Var a, Var b);
Var fft2(Var x);
Var ifft2(Var x);
Var real(Var x);

/// x[..., n, n] real -> retained half spectrum [..., 2m, m] complex.
Var rfft2_trunc(Var x, std::size_t modes);
/// Inverse of the above with 1/n^2 normalisation; output is exactly real.
Var irfft2_trunc(Var spec, std::size_t n);
/// spec[b, ci, 2m, m] x w[ci, co, 2m, m] -> [b, co, 2m, m] (per-mode channel mix).
Var spectral_mix(Var spec, Var w);
/// 1x1 convolution: x[b, ci, p] -> w[co, ci] x + bias[co] -> [b, co, p].
Var channel_mix(Var x, Var w, Var bias);

/// A contiguous run of rows in a packed [rows x width] sequence matrix.
struct Segment {
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Bidirectional multi-head attention applied independently within each
/// segment. q, k, v: [rows x e]; returns [rows x e]. When probs is non-null
/// the softmax matrices are appended to it (segment-major, then head).
Var self_attention(Var q, Var k, Var v, const std::vector<Segment>& segments, std::size_t heads,
                   std::vector<Tensor>* probs = nullptr);

/// Row mean within each segment: [rows x e] -> [segments x e].
Var segment_mean(Var x, const std::vector<Segment>& segments);

}  // namespace unipde::gk
