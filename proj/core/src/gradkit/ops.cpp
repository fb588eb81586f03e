// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/gradkit/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

#include "unipde/common.hpp"
#include "unipde/gradkit/fft.hpp"

namespace unipde::gk {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MMap = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

std::size_t norm_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                                std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit sp;
  for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
  sp.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

void add_into(Tensor* g, const Tensor& d, double alpha = 1.0) {
  if (!g) return;
  auto gd = g->data();
  auto dd = d.data();
  for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += alpha * dd[i];
}

void require_real(const Tensor& t, const char* op) {
  if (t.is_complex()) throw std::invalid_argument(std::string(op) + ": expects a real tensor");
}

void require_complex(const Tensor& t, const char* op) {
  if (!t.is_complex()) throw std::invalid_argument(std::string(op) + ": expects a complex tensor");
}

constexpr double kInvSqrt2 = 0.7071067811865476;

}  // namespace

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape() || av.is_complex() != bv.is_complex()) shape_error("add", av.shape(), bv.shape());
  Tensor out = av;
  auto od = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
    add_into(t.grad_sink(ia), g);
    add_into(t.grad_sink(ib), g);
  });
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape() || av.is_complex() != bv.is_complex()) shape_error("sub", av.shape(), bv.shape());
  Tensor out = av;
  auto od = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
    add_into(t.grad_sink(ia), g);
    add_into(t.grad_sink(ib), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_error("mul", av.shape(), bv.shape());
  require_real(av, "mul");
  require_real(bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (Tensor* ga = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * y[i];
    }
    if (Tensor* gb = t.grad_sink(ib)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, s](Tape& t, const Tensor& g) { add_into(t.grad_sink(ia), g, s); });
}

Var mul_const(Var a, const Tensor& m) {
  const Tensor& av = a.value();
  if (av.shape() != m.shape()) shape_error("mul_const", av.shape(), m.shape());
  require_real(av, "mul_const");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * m[i];
  const int ia = a.id;
  auto mask = std::make_shared<Tensor>(m);
  return a.tape->record(std::move(out), {ia}, [ia, mask](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * (*mask)[i];
    }
  });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_error("matmul", av.shape(), bv.shape());
  require_real(av, "matmul");
  require_real(bv, "matmul");
  const auto m = av.dim(0), k = av.dim(1), p = bv.dim(1);
  Tensor out({m, p});
  MMap(out.ptr(), m, p).noalias() = CMap(av.ptr(), m, k) * CMap(bv.ptr(), k, p);
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib, m, k, p](Tape& t, const Tensor& g) {
    CMap G(g.ptr(), m, p);
    if (Tensor* ga = t.grad_sink(ia)) MMap(ga->ptr(), m, k).noalias() += G * CMap(t.value(ib).ptr(), k, p).transpose();
    if (Tensor* gb = t.grad_sink(ib)) MMap(gb->ptr(), k, p).noalias() += CMap(t.value(ia).ptr(), m, k).transpose() * G;
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("transpose: expects rank 2, got " + shape_str(av.shape()));
  require_real(av, "transpose");
  const auto r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  MMap(out.ptr(), c, r) = CMap(av.ptr(), r, c).transpose();
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, r, c](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(ia)) MMap(ga->ptr(), r, c) += CMap(g.ptr(), c, r).transpose();
  });
}

Var linear(Var x, Var w, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0)) shape_error("linear", xv.shape(), wv.shape());
  const auto r = xv.dim(0), in = xv.dim(1), o = wv.dim(1);
  const bool has_bias = bias.valid();
  if (has_bias && bias.value().shape() != Shape{o}) shape_error("linear(bias)", wv.shape(), bias.value().shape());
  Tensor out({r, o});
  MMap Y(out.ptr(), r, o);
  Y.noalias() = CMap(xv.ptr(), r, in) * CMap(wv.ptr(), in, o);
  if (has_bias) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().ptr(), o);
  const int ix = x.id, iw = w.id, ib = has_bias ? bias.id : -1;
  std::vector<int> inputs{ix, iw};
  if (has_bias) inputs.push_back(ib);
  return x.tape->record(std::move(out), std::move(inputs), [ix, iw, ib, r, in, o](Tape& t, const Tensor& g) {
    CMap G(g.ptr(), r, o);
    if (Tensor* gx = t.grad_sink(ix)) MMap(gx->ptr(), r, in).noalias() += G * CMap(t.value(iw).ptr(), in, o).transpose();
    if (Tensor* gw = t.grad_sink(iw)) MMap(gw->ptr(), in, o).noalias() += CMap(t.value(ix).ptr(), r, in).transpose() * G;
    if (ib >= 0) {
      if (Tensor* gb = t.grad_sink(ib)) Eigen::Map<Eigen::RowVectorXd>(gb->ptr(), o) += G.colwise().sum();
    }
  });
}

Var gelu(Var a) {
  const Tensor& av = a.value();
  require_real(av, "gelu");
  Tensor out(av.shape());
  auto cdf = std::make_shared<std::vector<double>>(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double x = av[i];
    (*cdf)[i] = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    out[i] = x * (*cdf)[i];
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, cdf](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& xv = t.value(ia);
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double x = xv[i];
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      (*ga)[i] += g[i] * ((*cdf)[i] + x * pdf);
    }
  });
}

Var softmax(Var a, int axis) {
  const Tensor& av = a.value();
  require_real(av, "softmax");
  const auto ax = norm_axis(axis, av.rank(), "softmax");
  const auto sp = split_axis(av.shape(), ax);
  Tensor out(av.shape());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < sp.len; ++k) mx = std::max(mx, av[base + k * sp.inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) {
        const double e = std::exp(av[base + k * sp.inner] - mx);
        out[base + k * sp.inner] = e;
        s += e;
      }
      for (std::size_t k = 0; k < sp.len; ++k) out[base + k * sp.inner] /= s;
    }
  }
  const int ia = a.id;
  auto y = std::make_shared<Tensor>(out);
  return a.tape->record(std::move(out), {ia}, [ia, y, sp](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.len * sp.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.len; ++k) dot += g[base + k * sp.inner] * (*y)[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.len; ++k) {
          const std::size_t i = base + k * sp.inner;
          (*ga)[i] += (*y)[i] * (g[i] - dot);
        }
      }
    }
  });
}

Var layernorm(Var a, int axis, double eps) {
  const Tensor& av = a.value();
  require_real(av, "layernorm");
  const auto ax = norm_axis(axis, av.rank(), "layernorm");
  const auto sp = split_axis(av.shape(), ax);
  Tensor out(av.shape());
  auto inv_std = std::make_shared<std::vector<double>>(sp.outer * sp.inner);
  const double n = static_cast<double>(sp.len);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mu = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) mu += av[base + k * sp.inner];
      mu /= n;
      double var = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) {
        const double d = av[base + k * sp.inner] - mu;
        var += d * d;
      }
      var /= n;
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[o * sp.inner + in] = is;
      for (std::size_t k = 0; k < sp.len; ++k) out[base + k * sp.inner] = (av[base + k * sp.inner] - mu) * is;
    }
  }
  const int ia = a.id;
  auto y = std::make_shared<Tensor>(out);
  return a.tape->record(std::move(out), {ia}, [ia, y, inv_std, sp, n](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.len * sp.inner + in;
        double mg = 0.0, mgy = 0.0;
        for (std::size_t k = 0; k < sp.len; ++k) {
          const std::size_t i = base + k * sp.inner;
          mg += g[i];
          mgy += g[i] * (*y)[i];
        }
        mg /= n;
        mgy /= n;
        const double is = (*inv_std)[o * sp.inner + in];
        for (std::size_t k = 0; k < sp.len; ++k) {
          const std::size_t i = base + k * sp.inner;
          (*ga)[i] += is * (g[i] - mg - (*y)[i] * mgy);
        }
      }
    }
  });
}

Var affine(Var x, Var gamma, Var beta) {
  const Tensor& xv = x.value();
  require_real(xv, "affine");
  if (xv.rank() < 1) throw std::invalid_argument("affine: rank-0 input");
  const std::size_t e = xv.shape().back();
  if (gamma.value().shape() != Shape{e}) shape_error("affine(gamma)", xv.shape(), gamma.value().shape());
  if (beta.value().shape() != Shape{e}) shape_error("affine(beta)", xv.shape(), beta.value().shape());
  const std::size_t rows = xv.numel() / e;
  Tensor out(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < e; ++j) out[r * e + j] = xv[r * e + j] * gv[j] + bv[j];
  }
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return x.tape->record(std::move(out), {ix, ig, ib}, [ix, ig, ib, rows, e](Tape& t, const Tensor& g) {
    const Tensor& xv2 = t.value(ix);
    const Tensor& gv2 = t.value(ig);
    Tensor* gx = t.grad_sink(ix);
    Tensor* gg = t.grad_sink(ig);
    Tensor* gb = t.grad_sink(ib);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < e; ++j) {
        const double gi = g[r * e + j];
        if (gx) (*gx)[r * e + j] += gi * gv2[j];
        if (gg) (*gg)[j] += gi * xv2[r * e + j];
        if (gb) (*gb)[j] += gi;
      }
    }
  });
}

Var mean(Var a, int axis) {
  const Tensor& av = a.value();
  require_real(av, "mean");
  const auto ax = norm_axis(axis, av.rank(), "mean");
  const auto sp = split_axis(av.shape(), ax);
  Shape os;
  for (std::size_t i = 0; i < av.rank(); ++i) {
    if (i != ax) os.push_back(av.dim(i));
  }
  if (os.empty()) os = {1};
  Tensor out(os);
  const double inv = 1.0 / static_cast<double>(sp.len);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      double s = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) s += av[o * sp.len * sp.inner + k * sp.inner + in];
      out[o * sp.inner + in] = s * inv;
    }
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, sp, inv](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t k = 0; k < sp.len; ++k) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          (*ga)[o * sp.len * sp.inner + k * sp.inner + in] += g[o * sp.inner + in] * inv;
        }
      }
    }
  });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  require_real(av, "sum");
  Tensor out = Tensor::scalar(av.sum());
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(ia)) {
      for (double& v : ga->data()) v += g[0];
    }
  });
}

Var reshape(Var a, Shape shape) {
  const Tensor& av = a.value();
  if (shape_numel(shape) != av.numel()) shape_error("reshape", av.shape(), shape);
  Tensor out = av.reshaped(std::move(shape));
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(ia)) {
      auto gd = ga->data();
      for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += g.data()[i];
    }
  });
}

Var concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = xs.front().value();
  const auto ax = norm_axis(axis, first.rank(), "concat");
  const std::size_t width = first.is_complex() ? 2 : 1;
  Shape os = first.shape();
  os[ax] = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    if (t.rank() != first.rank() || t.is_complex() != first.is_complex()) shape_error("concat", first.shape(), t.shape());
    for (std::size_t i = 0; i < t.rank(); ++i) {
      if (i != ax && t.dim(i) != first.dim(i)) shape_error("concat", first.shape(), t.shape());
    }
    os[ax] += t.dim(ax);
  }
  Tensor out(os, first.is_complex() ? DType::kComplex : DType::kReal64);
  const auto osp = split_axis(os, ax);
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    const auto sp = split_axis(t.shape(), ax);
    const std::size_t blk = sp.len * sp.inner * width;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(t.ptr() + o * blk, blk, out.ptr() + (o * osp.len + off) * osp.inner * width);
    }
    ids.push_back(v.id);
    offsets.push_back(off);
    off += sp.len;
  }
  return xs.front().tape->record(std::move(out), ids, [ids, offsets, ax, osp, width](Tape& t, const Tensor& g) {
    for (std::size_t j = 0; j < ids.size(); ++j) {
      Tensor* gi = t.grad_sink(ids[j]);
      if (!gi) continue;
      const auto sp = split_axis(gi->shape(), ax);
      const std::size_t blk = sp.len * sp.inner * width;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = g.ptr() + (o * osp.len + offsets[j]) * osp.inner * width;
        double* dst = gi->ptr() + o * blk;
        for (std::size_t i = 0; i < blk; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  const auto ax = norm_axis(axis, av.rank(), "slice");
  if (begin >= end || end > av.dim(ax)) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") invalid for " + shape_str(av.shape()));
  }
  const std::size_t width = av.is_complex() ? 2 : 1;
  Shape os = av.shape();
  os[ax] = end - begin;
  Tensor out(os, av.is_complex() ? DType::kComplex : DType::kReal64);
  const auto sp = split_axis(av.shape(), ax);
  const std::size_t blk = (end - begin) * sp.inner * width;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(av.ptr() + (o * sp.len + begin) * sp.inner * width, blk, out.ptr() + o * blk);
  }
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, sp, begin, blk, width](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = ga->ptr() + (o * sp.len + begin) * sp.inner * width;
      const double* src = g.ptr() + o * blk;
      for (std::size_t i = 0; i < blk; ++i) dst[i] += src[i];
    }
  });
}

Var gather_rows(Var x, std::vector<std::size_t> rows) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("gather_rows: expects rank 2, got " + shape_str(xv.shape()));
  require_real(xv, "gather_rows");
  const std::size_t w = xv.dim(1);
  for (auto r : rows) {
    if (r >= xv.dim(0)) throw std::invalid_argument("gather_rows: row index out of range for " + shape_str(xv.shape()));
  }
  if (rows.empty()) throw std::invalid_argument("gather_rows: empty index list");
  Tensor out({rows.size(), w});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(xv.ptr() + rows[i] * w, w, out.ptr() + i * w);
  const int ix = x.id;
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(rows));
  return x.tape->record(std::move(out), {ix}, [ix, idx, w](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(ix);
    if (!gx) return;
    for (std::size_t i = 0; i < idx->size(); ++i) {
      double* dst = gx->ptr() + (*idx)[i] * w;
      const double* src = g.ptr() + i * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

Var cmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_error("cmul", av.shape(), bv.shape());
  require_complex(av, "cmul");
  require_complex(bv, "cmul");
  Tensor out(av.shape(), DType::kComplex);
  for (std::size_t i = 0; i < out.numel(); ++i) out.cset(i, av.cget(i) * bv.cget(i));
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    Tensor* ga = t.grad_sink(ia);
    Tensor* gb = t.grad_sink(ib);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const cplx gi = g.cget(i);
      if (ga) ga->cset(i, ga->cget(i) + gi * std::conj(y.cget(i)));
      if (gb) gb->cset(i, gb->cget(i) + gi * std::conj(x.cget(i)));
    }
  });
}

namespace {

// Adds (optionally the real part of) src * alpha into a gradient buffer.
void add_maybe_real(Tensor* dst, const Tensor& src_complex, double alpha) {
  if (!dst) return;
  if (dst->is_complex()) {
    add_into(dst, src_complex, alpha);
  } else {
    for (std::size_t i = 0; i < dst->numel(); ++i) (*dst)[i] += alpha * src_complex[2 * i];
  }
}

}  // namespace

Var fft2(Var x) {
  Tensor out = gk::fft2(x.value());
  const int ix = x.id;
  const std::size_t n0 = x.value().dim(x.value().rank() - 2), n1 = x.value().dim(x.value().rank() - 1);
  const double nn = static_cast<double>(n0 * n1);
  return x.tape->record(std::move(out), {ix}, [ix, nn](Tape& t, const Tensor& g) {
    // adjoint of the unnormalized DFT is the unnormalized inverse DFT
    add_maybe_real(t.grad_sink(ix), gk::ifft2(g), nn);
  });
}

Var ifft2(Var x) {
  Tensor out = gk::ifft2(x.value());
  const int ix = x.id;
  const std::size_t n0 = x.value().dim(x.value().rank() - 2), n1 = x.value().dim(x.value().rank() - 1);
  const double nn = static_cast<double>(n0 * n1);
  return x.tape->record(std::move(out), {ix}, [ix, nn](Tape& t, const Tensor& g) {
    add_maybe_real(t.grad_sink(ix), gk::fft2(g), 1.0 / nn);
  });
}

Var real(Var x) {
  const Tensor& xv = x.value();
  require_complex(xv, "real");
  Tensor out = real_part(xv);
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_sink(ix)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[2 * i] += g[i];
    }
  });
}

namespace {

void check_spectral(std::size_t n, std::size_t modes, const char* op) {
  if (!is_pow2(n)) throw std::invalid_argument(std::string(op) + ": grid extent must be a power of two, got " + std::to_string(n));
  if (modes < 1 || modes > n / 2) {
    throw std::invalid_argument(std::string(op) + ": modes must be in [1, n/2], got " + std::to_string(modes) +
                                " for n=" + std::to_string(n));
  }
}

}  // namespace

Var rfft2_trunc(Var x, std::size_t modes) {
  const Tensor& xv = x.value();
  require_real(xv, "rfft2_trunc");
  if (xv.rank() < 2 || xv.dim(xv.rank() - 1) != xv.dim(xv.rank() - 2)) {
    throw std::invalid_argument("rfft2_trunc: expects [..., n, n], got " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.shape().back();
  check_spectral(n, modes, "rfft2_trunc");
  Shape os = xv.shape();
  os[os.size() - 2] = 2 * modes;
  os[os.size() - 1] = modes;
  Tensor out(os, DType::kComplex);
  const std::size_t planes = xv.numel() / (n * n);
  const std::size_t sblk = 2 * modes * modes;
  auto* o = reinterpret_cast<cplx*>(out.ptr());
  rfft2_truncated_batch(xv.ptr(), planes, n, modes, o);
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, n, modes, planes, sblk](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(ix);
    if (!gx) return;
    const auto* gs = reinterpret_cast<const cplx*>(g.ptr());
    std::vector<double> buf(planes * n * n);
    irfft2_truncated_batch(gs, planes, n, modes, 1.0, 1.0, buf.data());
    double* dst = gx->ptr();
    for (std::size_t i = 0; i < buf.size(); ++i) dst[i] += buf[i];
  });
}

Var irfft2_trunc(Var spec, std::size_t n) {
  const Tensor& sv = spec.value();
  require_complex(sv, "irfft2_trunc");
  if (sv.rank() < 2 || sv.dim(sv.rank() - 2) != 2 * sv.dim(sv.rank() - 1)) {
    throw std::invalid_argument("irfft2_trunc: expects [..., 2m, m], got " + shape_str(sv.shape()));
  }
  const std::size_t modes = sv.shape().back();
  check_spectral(n, modes, "irfft2_trunc");
  Shape os = sv.shape();
  os[os.size() - 2] = n;
  os[os.size() - 1] = n;
  Tensor out(os);
  const std::size_t sblk = 2 * modes * modes;
  const std::size_t planes = sv.numel() / sblk;
  const double inv = 1.0 / static_cast<double>(n * n);
  const auto* s = reinterpret_cast<const cplx*>(sv.ptr());
  irfft2_truncated_batch(s, planes, n, modes, inv, 2.0, out.ptr());
  const int is = spec.id;
  return spec.tape->record(std::move(out), {is}, [is, n, modes, planes, sblk, inv](Tape& t, const Tensor& g) {
    Tensor* gs = t.grad_sink(is);
    if (!gs) return;
    auto* dst = reinterpret_cast<cplx*>(gs->ptr());
    std::vector<cplx> buf(planes * sblk);
    rfft2_truncated_batch(g.ptr(), planes, n, modes, buf.data());
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t r = 0; r < 2 * modes; ++r) {
        for (std::size_t c = 0; c < modes; ++c) {
          const double w = (c == 0 ? 1.0 : 2.0) * inv;
          dst[p * sblk + r * modes + c] += w * buf[p * sblk + r * modes + c];
        }
      }
    }
  });
}

// d[k] += a[k] * b[k] with optional conjugates, without the IEEE
// special-case handling of std::complex multiplication.
static void cmac(cplx* d, const cplx* a, const cplx* b, std::size_t len, bool conj_a, bool conj_b) {
  auto* dd = reinterpret_cast<double*>(d);
  const auto* aa = reinterpret_cast<const double*>(a);
  const auto* bb = reinterpret_cast<const double*>(b);
  const double sa = conj_a ? -1.0 : 1.0, sb = conj_b ? -1.0 : 1.0;
  for (std::size_t k = 0; k < len; ++k) {
    const double ar = aa[2 * k], ai = sa * aa[2 * k + 1];
    const double br = bb[2 * k], bi = sb * bb[2 * k + 1];
    dd[2 * k] += ar * br - ai * bi;
    dd[2 * k + 1] += ar * bi + ai * br;
  }
}

Var spectral_mix(Var spec, Var w) {
  const Tensor& sv = spec.value();
  const Tensor& wv = w.value();
  require_complex(sv, "spectral_mix");
  require_complex(wv, "spectral_mix");
  if (sv.rank() != 4 || wv.rank() != 4 || sv.dim(1) != wv.dim(0) || sv.dim(2) != wv.dim(2) || sv.dim(3) != wv.dim(3)) {
    shape_error("spectral_mix", sv.shape(), wv.shape());
  }
  const std::size_t b = sv.dim(0), ci = sv.dim(1), co = wv.dim(1), modes = sv.dim(2) * sv.dim(3);
  Tensor out({b, co, sv.dim(2), sv.dim(3)}, DType::kComplex);
  const auto* s = reinterpret_cast<const cplx*>(sv.ptr());
  const auto* wp = reinterpret_cast<const cplx*>(wv.ptr());
  auto* o = reinterpret_cast<cplx*>(out.ptr());
  parallel_for(b, [&](std::size_t bi) {
    for (std::size_t oc = 0; oc < co; ++oc) {
      cplx* dst = o + (bi * co + oc) * modes;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const cplx* src = s + (bi * ci + ic) * modes;
        const cplx* wt = wp + (ic * co + oc) * modes;
        cmac(dst, src, wt, modes, false, false);
      }
    }
  });
  const int is = spec.id, iw = w.id;
  return spec.tape->record(std::move(out), {is, iw}, [is, iw, b, ci, co, modes](Tape& t, const Tensor& g) {
    const auto* gp = reinterpret_cast<const cplx*>(g.ptr());
    if (Tensor* gs = t.grad_sink(is)) {
      const auto* wp2 = reinterpret_cast<const cplx*>(t.value(iw).ptr());
      auto* dst = reinterpret_cast<cplx*>(gs->ptr());
      parallel_for(b, [&](std::size_t bi) {
        for (std::size_t ic = 0; ic < ci; ++ic) {
          cplx* d = dst + (bi * ci + ic) * modes;
          for (std::size_t oc = 0; oc < co; ++oc) {
            const cplx* gg = gp + (bi * co + oc) * modes;
            const cplx* wt = wp2 + (ic * co + oc) * modes;
            cmac(d, gg, wt, modes, false, true);
          }
        }
      });
    }
    if (Tensor* gw = t.grad_sink(iw)) {
      const auto* sp = reinterpret_cast<const cplx*>(t.value(is).ptr());
      auto* dst = reinterpret_cast<cplx*>(gw->ptr());
      parallel_for(ci, [&](std::size_t ic) {
        for (std::size_t oc = 0; oc < co; ++oc) {
          cplx* d = dst + (ic * co + oc) * modes;
          for (std::size_t bi = 0; bi < b; ++bi) {
            const cplx* src = sp + (bi * ci + ic) * modes;
            const cplx* gg = gp + (bi * co + oc) * modes;
            cmac(d, gg, src, modes, false, true);
          }
        }
      });
    }
  });
}

Var channel_mix(Var x, Var w, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_real(xv, "channel_mix");
  if (xv.rank() < 2 || wv.rank() != 2 || wv.dim(1) != xv.dim(1)) shape_error("channel_mix", xv.shape(), wv.shape());
  const std::size_t b = xv.dim(0), ci = xv.dim(1), co = wv.dim(0);
  const std::size_t p = xv.numel() / (b * ci);
  const bool has_bias = bias.valid();
  if (has_bias && bias.value().shape() != Shape{co}) shape_error("channel_mix(bias)", wv.shape(), bias.value().shape());
  Shape os = xv.shape();
  os[1] = co;
  Tensor out(os);
  CMap W(wv.ptr(), co, ci);
  parallel_for(b, [&](std::size_t bi) {
    MMap Y(out.ptr() + bi * co * p, co, p);
    Y.noalias() = W * CMap(xv.ptr() + bi * ci * p, ci, p);
    if (has_bias) Y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().ptr(), co);
  });
  const int ix = x.id, iw = w.id, ib = has_bias ? bias.id : -1;
  std::vector<int> inputs{ix, iw};
  if (has_bias) inputs.push_back(ib);
  return x.tape->record(std::move(out), std::move(inputs), [ix, iw, ib, b, ci, co, p](Tape& t, const Tensor& g) {
    const Tensor& xv2 = t.value(ix);
    CMap W2(t.value(iw).ptr(), co, ci);
    if (Tensor* gx = t.grad_sink(ix)) {
      parallel_for(b, [&](std::size_t bi) {
        MMap(gx->ptr() + bi * ci * p, ci, p).noalias() += W2.transpose() * CMap(g.ptr() + bi * co * p, co, p);
      });
    }
    if (Tensor* gw = t.grad_sink(iw)) {
      MMap GW(gw->ptr(), co, ci);
      for (std::size_t bi = 0; bi < b; ++bi) {
        GW.noalias() += CMap(g.ptr() + bi * co * p, co, p) * CMap(xv2.ptr() + bi * ci * p, ci, p).transpose();
      }
    }
    if (ib >= 0) {
      if (Tensor* gb = t.grad_sink(ib)) {
        Eigen::Map<Eigen::VectorXd> GB(gb->ptr(), co);
        for (std::size_t bi = 0; bi < b; ++bi) GB += CMap(g.ptr() + bi * co * p, co, p).rowwise().sum();
      }
    }
  });
}

Var self_attention(Var q, Var k, Var v, const std::vector<Segment>& segments, std::size_t heads,
                   std::vector<Tensor>* probs) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.rank() != 2 || qv.shape() != kv.shape() || qv.shape() != vv.shape()) shape_error("self_attention", qv.shape(), kv.shape());
  const std::size_t rows = qv.dim(0), e = qv.dim(1);
  if (heads == 0 || e % heads != 0) {
    throw std::invalid_argument("self_attention: width " + std::to_string(e) + " not divisible by heads " + std::to_string(heads));
  }
  for (const auto& s : segments) {
    if (s.length == 0 || s.offset + s.length > rows) throw std::invalid_argument("self_attention: segment out of range");
  }
  const std::size_t dh = e / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({rows, e});
  auto saved = std::make_shared<std::vector<RowMat>>(segments.size() * heads);
  CMap Q(qv.ptr(), rows, e), K(kv.ptr(), rows, e), V(vv.ptr(), rows, e);
  MMap O(out.ptr(), rows, e);
  parallel_for(segments.size(), [&](std::size_t si) {
    const auto& s = segments[si];
    for (std::size_t h = 0; h < heads; ++h) {
      RowMat S = (Q.block(s.offset, h * dh, s.length, dh) * K.block(s.offset, h * dh, s.length, dh).transpose()) * inv;
      for (Eigen::Index r = 0; r < S.rows(); ++r) {
        const double mx = S.row(r).maxCoeff();
        S.row(r) = (S.row(r).array() - mx).exp();
        S.row(r) /= S.row(r).sum();
      }
      O.block(s.offset, h * dh, s.length, dh).noalias() = S * V.block(s.offset, h * dh, s.length, dh);
      (*saved)[si * heads + h] = std::move(S);
    }
  });
  if (probs) {
    for (const auto& P : *saved) {
      Tensor pt({static_cast<std::size_t>(P.rows()), static_cast<std::size_t>(P.cols())});
      MMap(pt.ptr(), P.rows(), P.cols()) = P;
      probs->push_back(std::move(pt));
    }
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return q.tape->record(std::move(out), {iq, ik, iv},
                        [iq, ik, iv, segments, heads, dh, rows, e, inv, saved](Tape& t, const Tensor& g) {
    CMap Q2(t.value(iq).ptr(), rows, e), K2(t.value(ik).ptr(), rows, e), V2(t.value(iv).ptr(), rows, e);
    CMap G(g.ptr(), rows, e);
    Tensor* gq = t.grad_sink(iq);
    Tensor* gk = t.grad_sink(ik);
    Tensor* gv = t.grad_sink(iv);
    parallel_for(segments.size(), [&](std::size_t si) {
      const auto& s = segments[si];
      for (std::size_t h = 0; h < heads; ++h) {
        const RowMat& P = (*saved)[si * heads + h];
        auto dO = G.block(s.offset, h * dh, s.length, dh);
        if (gv) MMap(gv->ptr(), rows, e).block(s.offset, h * dh, s.length, dh).noalias() += P.transpose() * dO;
        if (!gq && !gk) continue;
        RowMat dP = dO * V2.block(s.offset, h * dh, s.length, dh).transpose();
        const Eigen::VectorXd rs = (dP.array() * P.array()).rowwise().sum();
        RowMat dS = (P.array() * (dP.colwise() - rs).array()).matrix() * inv;
        if (gq) MMap(gq->ptr(), rows, e).block(s.offset, h * dh, s.length, dh).noalias() += dS * K2.block(s.offset, h * dh, s.length, dh);
        if (gk) MMap(gk->ptr(), rows, e).block(s.offset, h * dh, s.length, dh).noalias() += dS.transpose() * Q2.block(s.offset, h * dh, s.length, dh);
      }
    });
  });
}

Var segment_mean(Var x, const std::vector<Segment>& segments) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("segment_mean: expects rank 2, got " + shape_str(xv.shape()));
  const std::size_t rows = xv.dim(0), e = xv.dim(1);
  if (segments.empty()) throw std::invalid_argument("segment_mean: no segments");
  Tensor out({segments.size(), e});
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const auto& s = segments[si];
    if (s.length == 0 || s.offset + s.length > rows) throw std::invalid_argument("segment_mean: segment out of range");
    for (std::size_t r = s.offset; r < s.offset + s.length; ++r) {
      for (std::size_t j = 0; j < e; ++j) out[si * e + j] += xv[r * e + j];
    }
    for (std::size_t j = 0; j < e; ++j) out[si * e + j] /= static_cast<double>(s.length);
  }
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, segments, e](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(ix);
    if (!gx) return;
    for (std::size_t si = 0; si < segments.size(); ++si) {
      const auto& s = segments[si];
      const double inv = 1.0 / static_cast<double>(s.length);
      for (std::size_t r = s.offset; r < s.offset + s.length; ++r) {
        for (std::size_t j = 0; j < e; ++j) (*gx)[r * e + j] += g[si * e + j] * inv;
      }
    }
  });
}

}  // namespace unipde::gk
