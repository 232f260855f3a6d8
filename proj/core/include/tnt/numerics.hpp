// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Dense 64-bit matrix/vector arithmetic shared by every module.
//
// All reductions run sequentially over the reduced index, so two code paths
// that perform the same products in the same order produce bit-identical
// results. The chunked, sharded and serial engines depend on this.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "tnt/errors.hpp"

namespace tnt {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  explicit Vector(std::vector<double> data) : data_(std::move(data)) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::span<const double> values)
      : data_(values.begin(), values.end()) {}

  std::size_t dim() const { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  operator std::span<const double>() const { return data_; }  // NOLINT

  const std::vector<double>& values() const { return data_; }
  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  // Exact elementwise equality; shapes must match too.
  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Vector matvec(const Matrix& a, std::span<const double> x);
// a^T x
Vector matvec_t(const Matrix& a, std::span<const double> x);
Matrix outer(std::span<const double> u, std::span<const double> w);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double sum(std::span<const double> a);
Vector add(std::span<const double> a, std::span<const double> b);
Vector sub(std::span<const double> a, std::span<const double> b);
Vector scaled(double s, std::span<const double> a);
Vector normalized(std::span<const double> a, double eps = 0.0);

// out[t] = ms[0] + ms[1] + ... + ms[t], folded left to right.
std::vector<Matrix> prefix_sum_matrices(std::span<const Matrix> ms);

enum class Activation { kTanh, kGelu };

std::string_view to_string(Activation kind);
Activation activation_from_string(std::string_view name);

double activate(double x, Activation kind);
double activate_derivative(double x, Activation kind);
double activate_second_derivative(double x, Activation kind);
Vector nonlinearity(std::span<const double> x, Activation kind);
Vector nonlinearity_derivative(std::span<const double> x, Activation kind);

double softplus(double x);
double sigmoid(double x);

bool all_finite(std::span<const double> values);
double max_abs(std::span<const double> values);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
// max|a-b| / max(max|a|, max|b|); zero when both are identically zero.
double relative_error(std::span<const double> a, std::span<const double> b);

// Central differences: (f(p + h e_i) - f(p - h e_i)) / 2h for each coordinate.
std::vector<double> finite_difference_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> params, double step);

}  // namespace tnt
