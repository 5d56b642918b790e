// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace abcnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents are incompatible with an operator's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A tensor or image does not have the shape a module requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a precondition that is not about shapes.
class ContractError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Attention weights or kappa variances collapsed to zero.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised when a computation would exceed the configured memory budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of 64-bit reals. Every extent is >= 1; a
/// default-constructed Tensor is the only empty value and represents "absent".
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor({1}, v); }
  static Tensor from(Shape shape, std::initializer_list<double> values);

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::int64_t i, std::int64_t j) { return data_[index(i, j)]; }
  double at(std::int64_t i, std::int64_t j) const { return data_[index(i, j)]; }
  double& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[index(b, c, h, w)];
  }
  double at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[index(b, c, h, w)];
  }

  /// Same elements, new extents; the element count must be preserved.
  Tensor reshaped(Shape shape) const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double sum() const;
  void fill(double v);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t index(std::int64_t i, std::int64_t j) const {
    return static_cast<std::size_t>(i * shape_[1] + j);
  }
  std::size_t index(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w);
  }

  Shape shape_;
  std::vector<double> data_;
};

/// xorshift64* generator seeded through splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x9E3779B97F4A7C15ULL);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  Rng split();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Tensor random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);
Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0);

/// Max |a-b| / max(|a|, |b|, floor) over all elements.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace abcnet
