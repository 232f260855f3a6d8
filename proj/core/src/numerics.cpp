// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace tnt {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch (" +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": dimension mismatch (" +
                     std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] = data_[i] + other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] = data_[i] - other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x = s * x;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_same_dim(a.cols(), b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require_same_dim(a.cols(), b.cols(), "matmul_nt");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(arow, b.row(j));
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require_same_dim(a.rows(), b.rows(), "matmul_tn");
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      double* out = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  require_same_dim(a.cols(), x.size(), "matvec");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
  require_same_dim(a.rows(), x.size(), "matvec_t");
  Vector y(a.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto arow = a.row(k);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += x[k] * arow[j];
  }
  return y;
}

Matrix outer(std::span<const double> u, std::span<const double> w) {
  Matrix m(u.size(), w.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    double* out = m.row(i).data();
    for (std::size_t j = 0; j < w.size(); ++j) out[j] = u[i] * w[j];
  }
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double sum(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x;
  return s;
}

Vector add(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "add");
  Vector y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

Vector sub(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "sub");
  Vector y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
  return y;
}

Vector scaled(double s, std::span<const double> a) {
  Vector y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = s * a[i];
  return y;
}

Vector normalized(std::span<const double> a, double eps) {
  const double n2 = dot(a, a) + eps;
  const double inv = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
  return scaled(inv, a);
}

std::vector<Matrix> prefix_sum_matrices(std::span<const Matrix> ms) {
  std::vector<Matrix> out;
  out.reserve(ms.size());
  for (std::size_t t = 0; t < ms.size(); ++t) {
    if (t == 0) {
      out.push_back(ms[0]);
    } else {
      require_same_shape(ms[0], ms[t], "prefix_sum_matrices");
      out.push_back(out.back() + ms[t]);
    }
  }
  return out;
}

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::kTanh: return "tanh";
    case Activation::kGelu: return "gelu";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "gelu") return Activation::kGelu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

// gelu uses the exact erf form x * Phi(x).
double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::kTanh: return std::tanh(x);
    case Activation::kGelu: return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return 0.0;
}

double activate_derivative(double x, Activation kind) {
  switch (kind) {
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kGelu: {
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return cdf + x * pdf;
    }
  }
  return 0.0;
}

double activate_second_derivative(double x, Activation kind) {
  switch (kind) {
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::kGelu: {
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return pdf * (2.0 - x * x);
    }
  }
  return 0.0;
}

Vector nonlinearity(std::span<const double> x, Activation kind) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = activate(x[i], kind);
  return y;
}

Vector nonlinearity_derivative(std::span<const double> x, Activation kind) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = activate_derivative(x[i], kind);
  return y;
}

double softplus(double x) {
  // log(1 + e^x) without overflow for large x.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double x) { return std::isfinite(x); });
}

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double x : values) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  const double scale = std::max(max_abs(a), max_abs(b));
  const double diff = max_abs_diff(a, b);
  if (scale == 0.0) return diff;
  return diff / scale;
}

std::vector<double> finite_difference_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_grad: step must be > 0");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    const double up = f(p);
    p[i] = saved - step;
    const double down = f(p);
    p[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace tnt
