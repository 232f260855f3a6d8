// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "support/random.hpp"
#include "tnt/numerics.hpp"

namespace tnt {
namespace {

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Matrix::identity(2), a), a);
}

TEST(Matmul, ZeroTimesAnything) {
  EXPECT_EQ(matmul(Matrix::from_rows({{0}}), Matrix::from_rows({{5}})), Matrix::from_rows({{0}}));
}

TEST(Matmul, HandComputedProduct) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5}, {6}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{17}, {39}}));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(matmul_nt(Matrix(2, 3), Matrix(2, 2)), ShapeError);
  EXPECT_THROW(matmul_tn(Matrix(2, 3), Matrix(3, 3)), ShapeError);
  EXPECT_THROW(matvec(Matrix(2, 3), Vector(2)), ShapeError);
}

TEST(Matmul, TransposedVariantsAgreeWithExplicitTranspose) {
  testing::Rand rng(1);
  const Matrix a = rng.matrix(3, 4);
  const Matrix b = rng.matrix(5, 4);
  const Matrix c = rng.matrix(3, 2);
  EXPECT_EQ(matmul_nt(a, b), matmul(a, transpose(b)));
  EXPECT_EQ(matmul_tn(a, c), matmul(transpose(a), c));
  const Vector x = rng.vector(4);
  const Matrix xc = Matrix::column(x.span());
  const Matrix col = matmul(a, xc);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(matvec(a, x)[i], col(i, 0));
  const Vector y = rng.vector(3);
  const Vector aty = matvec_t(a, y);
  const Matrix ref = matmul_tn(a, Matrix::column(y.span()));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(aty[i], ref(i, 0));
}

TEST(Outer, BasisVector) {
  EXPECT_EQ(outer(Vector{1, 0}, Vector{1, 0}), Matrix::from_rows({{1, 0}, {0, 0}}));
}

TEST(Outer, ZeroVector) { EXPECT_EQ(outer(Vector{0, 0}, Vector{3, 4}), Matrix(2, 2)); }

TEST(Outer, HandComputed) {
  EXPECT_EQ(outer(Vector{1, 2}, Vector{3, 4}), Matrix::from_rows({{3, 4}, {6, 8}}));
}

TEST(PrefixSum, Singleton) {
  const Matrix a = Matrix::from_rows({{1.5, -2}});
  const std::vector<Matrix> ms{a};
  EXPECT_EQ(prefix_sum_matrices(ms), ms);
}

TEST(PrefixSum, Zeros) {
  const std::vector<Matrix> ms(3, Matrix(2, 2));
  EXPECT_EQ(prefix_sum_matrices(ms), ms);
}

TEST(PrefixSum, FoldOracle) {
  const std::vector<Matrix> ms{Matrix::from_rows({{1}}), Matrix::from_rows({{2}}),
                               Matrix::from_rows({{3}})};
  const std::vector<Matrix> expected{Matrix::from_rows({{1}}), Matrix::from_rows({{3}}),
                                     Matrix::from_rows({{6}})};
  EXPECT_EQ(prefix_sum_matrices(ms), expected);
}

TEST(PrefixSum, ShapeMismatchThrows) {
  const std::vector<Matrix> ms{Matrix(1, 2), Matrix(2, 1)};
  EXPECT_THROW(prefix_sum_matrices(ms), ShapeError);
}

TEST(PrefixSum, EqualsLeftFoldBitExactly) {
  testing::Rand rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Matrix> ms;
    for (std::size_t i = 0, n = rng.index(1, 12); i < n; ++i) ms.push_back(rng.matrix(2, 3, -1e3, 1e3));
    const auto out = prefix_sum_matrices(ms);
    Matrix acc = ms[0];
    for (std::size_t t = 0; t < ms.size(); ++t) {
      if (t > 0) {
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] = acc.data()[i] + ms[t].data()[i];
      }
      ASSERT_EQ(out[t], acc);
    }
  }
}

TEST(Nonlinearity, TanhOfZeroIsZero) {
  EXPECT_EQ(nonlinearity(Vector(4), Activation::kTanh), Vector(4));
}

TEST(Nonlinearity, TanhSaturates) {
  const Vector y = nonlinearity(Vector{20.0, 50.0}, Activation::kTanh);
  for (double v : y.span()) {
    EXPECT_GT(v, 1.0 - 1e-8);
    EXPECT_LE(v, 1.0);
  }
}

// Exact-erf gelu and its derivative, evaluated at 40 significant digits.
TEST(Nonlinearity, GeluMatchesHighPrecisionOracle) {
  EXPECT_NEAR(activate(1.0, Activation::kGelu), 0.8413447460685429485852325456320379, 1e-15);
  EXPECT_NEAR(activate(-0.5, Activation::kGelu), -0.1542687693629934481811476946958311, 1e-15);
  EXPECT_NEAR(activate(2.5, Activation::kGelu), 2.484475836685559662082554738564519, 1e-15);
  EXPECT_NEAR(activate_derivative(1.0, Activation::kGelu), 1.083315470587686298383062738567599,
              1e-15);
  EXPECT_NEAR(activate_derivative(-0.5, Activation::kGelu), 0.1325048753438371574749551685934034,
              1e-15);
}

TEST(Nonlinearity, DerivativesMatchFiniteDifferences) {
  for (Activation act : {Activation::kTanh, Activation::kGelu}) {
    for (double x : {-2.0, -0.3, 0.0, 0.7, 1.9}) {
      const double h = 1e-6;
      const double d1 = (activate(x + h, act) - activate(x - h, act)) / (2 * h);
      const double d2 =
          (activate_derivative(x + h, act) - activate_derivative(x - h, act)) / (2 * h);
      EXPECT_NEAR(activate_derivative(x, act), d1, 1e-8) << to_string(act) << " x=" << x;
      EXPECT_NEAR(activate_second_derivative(x, act), d2, 1e-7) << to_string(act) << " x=" << x;
    }
  }
}

TEST(Nonlinearity, NamesRoundTrip) {
  for (Activation act : {Activation::kTanh, Activation::kGelu})
    EXPECT_EQ(activation_from_string(to_string(act)), act);
  EXPECT_THROW(activation_from_string("relu"), ConfigError);
}

TEST(Softplus, KnownValuesAndStability) {
  EXPECT_DOUBLE_EQ(softplus(0.0), std::log(2.0));
  EXPECT_NEAR(softplus(0.3), 0.8543552444685271188145884355756766, 1e-15);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-700.0), 0.0);
  EXPECT_NEAR(sigmoid(0.0), 0.5, 0.0);
}

TEST(FiniteDifference, Square) {
  const std::vector<double> p{3.0};
  const auto g = finite_difference_grad([](std::span<const double> x) { return x[0] * x[0]; }, p,
                                        1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(FiniteDifference, ConstantHasZeroGradient) {
  const std::vector<double> p{1.0, -2.0, 0.5};
  const auto g = finite_difference_grad([](std::span<const double>) { return 4.0; }, p, 1e-5);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Normalized, ZeroVectorMapsToZero) {
  EXPECT_EQ(normalized(Vector(3)), Vector(3));
  const Vector u = normalized(Vector{3, 4});
  EXPECT_DOUBLE_EQ(u[0], 0.6);
  EXPECT_DOUBLE_EQ(u[1], 0.8);
}

TEST(Errors, RelativeErrorConventions) {
  const std::vector<double> zero(3, 0.0);
  EXPECT_EQ(relative_error(zero, zero), 0.0);
  const std::vector<double> a{1.0, 2.0};
  const std::vector<double> b{1.0, 2.2};
  EXPECT_NEAR(relative_error(a, b), 0.2 / 2.2, 1e-15);
  EXPECT_NEAR(max_abs_diff(a, b), 0.2, 1e-15);
}

TEST(Purity, RepeatedCallsAreBitIdentical) {
  testing::Rand rng(3);
  const Matrix a = rng.matrix(6, 5);
  const Matrix b = rng.matrix(5, 7);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
  const Vector x = rng.vector(5);
  EXPECT_EQ(nonlinearity(x, Activation::kGelu), nonlinearity(x, Activation::kGelu));
}

}  // namespace
}  // namespace tnt
