// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace unipde::gk {

using Shape = std::vector<std::size_t>;

/// Element type tag. Values are always held in double precision in memory;
/// kReal32 marks tensors whose serialized form is 32-bit. kComplex tensors
/// store interleaved (re, im) pairs, so data().size() == 2 * numel().
enum class DType : std::uint8_t { kReal64 = 0, kReal32 = 1, kComplex = 2 };

/// Cache-line aligned storage, so vectorized kernels see the same
/// alignment (and hence the same summation order) on every run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::kReal64);

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor complex_from(Shape shape, std::vector<double> interleaved);
  static Tensor scalar(double v) { return from({1}, {v}); }
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return numel_; }
  DType dtype() const { return dtype_; }
  bool is_complex() const { return dtype_ == DType::kComplex; }
  bool empty() const { return numel_ == 0; }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  double* ptr() { return values_.data(); }
  const double* ptr() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Row-major element access for real tensors.
  double& at(std::initializer_list<std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;

  std::complex<double> cget(std::size_t i) const { return {values_[2 * i], values_[2 * i + 1]}; }
  void cset(std::size_t i, std::complex<double> v) {
    values_[2 * i] = v.real();
    values_[2 * i + 1] = v.imag();
  }

  /// Same data, new shape. Element count must match.
  Tensor reshaped(Shape shape) const;
  void set_dtype_tag(DType d);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double max_abs() const;
  double sum() const;
  double norm2() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.dtype_ == b.dtype_ && a.values_ == b.values_;
  }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  DType dtype_ = DType::kReal64;
  std::size_t numel_ = 0;
  Storage values_;
};

/// max |a - b| over all stored values. Shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace unipde::gk
