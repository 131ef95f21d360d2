#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace story {

/// Dense vector of doubles.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  explicit Vector(std::vector<double> data) : data_(std::move(data)) {}
  Vector(std::initializer_list<double> values) : data_(values) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Throws dimension_mismatch when data.size() != rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Builds from nested rows; all rows must have the same length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

/// out[i] = sum_k W[i,k] * x[k] + b[i], summed left to right.
Vector affine(const Matrix& W, const Vector& x, const Vector& b);
Vector sigmoid(const Vector& x);
Vector tanh_act(const Vector& x);
/// Max-shifted softmax. Throws empty_input on an empty vector.
Vector softmax(const Vector& x);
/// log(softmax(x)) computed as x - max - log(sum exp(x - max)).
Vector log_softmax(const Vector& x);

double sigmoid(double x);

// Raw accumulation kernels used on the hot paths of forward and backward
// passes. Callers guarantee shapes.

/// out += W * x
void add_matvec(const Matrix& W, std::span<const double> x, std::span<double> out);
/// out += W^T * y
void add_matvec_transposed(const Matrix& W, std::span<const double> y, std::span<double> out);
/// G += y * x^T
void add_outer(Matrix& G, std::span<const double> y, std::span<const double> x);
/// out += a
void add_to(std::span<double> out, std::span<const double> a);

/// Throws non_finite naming `what` if any entry is NaN or infinite.
void ensure_finite(std::span<const double> values, const char* what);

}  // namespace story
