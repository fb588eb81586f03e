// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/gradkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace unipde::gk {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype), numel_(shape_numel(shape_)) {
  for (auto s : shape_) {
    if (s == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape_));
  }
  values_.assign(dtype_ == DType::kComplex ? 2 * numel_ : numel_, 0.0);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape));
  if (values.size() != t.numel_) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(t.shape_));
  }
  t.values_.assign(values.begin(), values.end());
  return t;
}

Tensor Tensor::complex_from(Shape shape, std::vector<double> interleaved) {
  Tensor t(std::move(shape), DType::kComplex);
  if (interleaved.size() != 2 * t.numel_) {
    throw std::invalid_argument("complex value count mismatch for shape " + shape_str(t.shape_));
  }
  t.values_.assign(interleaved.begin(), interleaved.end());
  return t;
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.values_.begin(), t.values_.end(), v);
  return t;
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw std::out_of_range("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= shape_[axis]) throw std::out_of_range("index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return values_[flat_index(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return values_[flat_index(idx)]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel_) {
    throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

void Tensor::set_dtype_tag(DType d) {
  if ((d == DType::kComplex) != (dtype_ == DType::kComplex)) {
    throw std::invalid_argument("cannot retag between real and complex");
  }
  dtype_ = d;
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

double Tensor::norm2() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.data().size() != b.data().size()) {
    throw std::invalid_argument("max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace unipde::gk
