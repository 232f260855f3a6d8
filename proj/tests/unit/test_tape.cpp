// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "support/random.hpp"
#include "tnt/tape.hpp"

namespace tnt::ad {
namespace {

using Build = std::function<Var(Tape&, std::span<const Var>)>;

// Compares tape gradients of every leaf against central differences.
double gradient_error(const std::vector<Matrix>& leaves, const Build& build) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& m : leaves) vars.push_back(tape.leaf(m));
  const Var loss = build(tape, vars);
  const Gradients g = tape.backward(loss);

  std::vector<double> flat, analytic;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    flat.insert(flat.end(), leaves[i].data().begin(), leaves[i].data().end());
    if (g.has(vars[i])) {
      analytic.insert(analytic.end(), g[vars[i]].data().begin(), g[vars[i]].data().end());
    } else {
      analytic.insert(analytic.end(), leaves[i].size(), 0.0);
    }
  }
  const auto fd = finite_difference_grad(
      [&](std::span<const double> p) {
        std::vector<Matrix> ms = leaves;
        std::size_t off = 0;
        for (auto& m : ms)
          for (double& x : m.data()) x = p[off++];
        Tape t;
        std::vector<Var> vs;
        for (const auto& m : ms) vs.push_back(t.leaf(m));
        return t.scalar(build(t, vs));
      },
      flat, 1e-5);
  return relative_error(analytic, fd);
}

TEST(Tape, LinearSumGradientIsOnesOuterX) {
  Tape tape;
  const Matrix w = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  const Matrix x = Matrix::from_rows({{0.5}, {-1}, {2}});
  const Var wv = tape.leaf(w);
  const Var loss = tape.sum(tape.matmul(wv, tape.constant(x)));
  const auto g = tape.backward(loss);
  EXPECT_EQ(g[wv], Matrix::from_rows({{0.5, -1, 2}, {0.5, -1, 2}}));
}

TEST(Tape, UnusedLeafHasNoGradient) {
  Tape tape;
  const Var used = tape.leaf(Matrix::from_rows({{2.0}}));
  const Var unused = tape.leaf(Matrix::from_rows({{7.0}}));
  const auto g = tape.backward(tape.sum(tape.mul(used, used)));
  EXPECT_FALSE(g.has(unused));
  EXPECT_EQ(g[used](0, 0), 4.0);
}

TEST(Tape, NonScalarTerminalThrows) {
  Tape tape;
  const Var x = tape.leaf(Matrix(2, 2, 1.0));
  EXPECT_THROW(tape.backward(tape.tanh(x)), ShapeError);
}

TEST(Tape, ShapeErrors) {
  Tape tape;
  const Var a = tape.leaf(Matrix(2, 3));
  const Var b = tape.leaf(Matrix(3, 2));
  EXPECT_THROW(tape.add(a, b), ShapeError);
  EXPECT_THROW(tape.add_scalar(a, b), ShapeError);
  EXPECT_THROW(tape.rows(a, 1, 2), ShapeError);
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(tape.gather_rows(a, bad), ShapeError);
}

TEST(Tape, ForwardValues) {
  Tape tape;
  const Var a = tape.constant(Matrix::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(tape.value(tape.shift_rows_down(a)), Matrix::from_rows({{0, 0}, {1, 2}}));
  EXPECT_EQ(tape.value(tape.causal_mask(a)), Matrix::from_rows({{1, 0}, {3, 4}}));
  EXPECT_EQ(tape.value(tape.rows(a, 1, 1)), Matrix::from_rows({{3, 4}}));
  const std::vector<std::size_t> ids{1, 1, 0};
  EXPECT_EQ(tape.value(tape.gather_rows(a, ids)), Matrix::from_rows({{3, 4}, {3, 4}, {1, 2}}));
  const std::vector<Var> parts{a, tape.rows(a, 0, 1)};
  EXPECT_EQ(tape.value(tape.concat_rows(parts)), Matrix::from_rows({{1, 2}, {3, 4}, {1, 2}}));
  EXPECT_EQ(tape.scalar(tape.sum(a)), 10.0);
}

TEST(Tape, CrossEntropyValue) {
  Tape tape;
  const Var logits = tape.constant(Matrix::from_rows({{0, 0}, {std::log(3.0), 0}}));
  const std::vector<std::size_t> targets{1, 0};
  // Mean of -log(1/2) and -log(3/4).
  EXPECT_NEAR(tape.scalar(tape.softmax_cross_entropy(logits, targets)),
              0.5 * (std::log(2.0) + std::log(4.0 / 3.0)), 1e-15);
}

TEST(Tape, NormalizeRowsMapsZeroRowToZero) {
  Tape tape;
  const Var a = tape.leaf(Matrix::from_rows({{0, 0}, {3, 4}}));
  const Var n = tape.normalize_rows(a, 0.0);
  EXPECT_EQ(tape.value(n).row(0)[0], 0.0);
  EXPECT_EQ(tape.value(n).row(0)[1], 0.0);
  EXPECT_NEAR(tape.value(n)(1, 0), 0.6, 1e-15);
  EXPECT_NEAR(tape.value(n)(1, 1), 0.8, 1e-15);
  const auto g = tape.backward(tape.sum(n));
  EXPECT_TRUE(all_finite(g[a].data()));
}

struct OpCase {
  std::string name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  Build build;
};

class TapeOpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(TapeOpGradient, MatchesFiniteDifferences) {
  testing::Rand rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Matrix> leaves;
    for (auto [r, c] : GetParam().shapes) leaves.push_back(rng.matrix(r, c));
    EXPECT_LT(gradient_error(leaves, GetParam().build), 1e-7) << GetParam().name;
  }
}

Var weighted_sum(Tape& t, Var x) {
  // Breaks the symmetry of a plain sum so every output entry gets a distinct
  // upstream gradient.
  Matrix w(t.value(x).rows(), t.value(x).cols());
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = 0.3 + 0.1 * static_cast<double>(i);
  return t.sum(t.mul(x, t.constant(w)));
}

const std::vector<std::size_t> kIds{2, 0, 2, 1};
const std::vector<std::size_t> kTargets{0, 2, 1};

INSTANTIATE_TEST_SUITE_P(
    AllOps, TapeOpGradient,
    ::testing::Values(
        OpCase{"add", {{2, 3}, {2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.add(v[0], v[1])); }},
        OpCase{"sub", {{2, 3}, {2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.sub(v[0], v[1])); }},
        OpCase{"mul", {{2, 3}, {2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.mul(v[0], v[1])); }},
        OpCase{"scale", {{2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.scale(v[0], -1.7)); }},
        OpCase{"add_scalar", {{2, 3}, {1, 1}}, [](Tape& t, auto v) { return weighted_sum(t, t.mul(t.add_scalar(v[0], v[1]), v[0])); }},
        OpCase{"matmul", {{2, 3}, {3, 4}}, [](Tape& t, auto v) { return weighted_sum(t, t.matmul(v[0], v[1])); }},
        OpCase{"matmul_nt", {{2, 3}, {4, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.matmul_nt(v[0], v[1])); }},
        OpCase{"matmul_tn", {{3, 2}, {3, 4}}, [](Tape& t, auto v) { return weighted_sum(t, t.matmul_tn(v[0], v[1])); }},
        OpCase{"scale_rows", {{3, 2}, {3, 1}}, [](Tape& t, auto v) { return weighted_sum(t, t.scale_rows(v[0], v[1])); }},
        OpCase{"causal_mask", {{3, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.causal_mask(v[0])); }},
        OpCase{"tanh", {{2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.tanh(v[0])); }},
        OpCase{"softplus", {{2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.softplus(v[0])); }},
        OpCase{"gelu", {{2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.activation(v[0], Activation::kGelu)); }},
        OpCase{"tanh_derivative", {{2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.activation_derivative(v[0], Activation::kTanh)); }},
        OpCase{"gelu_derivative", {{2, 3}}, [](Tape& t, auto v) { return weighted_sum(t, t.activation_derivative(v[0], Activation::kGelu)); }},
        OpCase{"normalize_rows", {{3, 4}}, [](Tape& t, auto v) { return weighted_sum(t, t.normalize_rows(v[0], 0.0)); }},
        OpCase{"rows", {{4, 2}}, [](Tape& t, auto v) { return weighted_sum(t, t.rows(v[0], 1, 2)); }},
        OpCase{"concat_rows", {{1, 2}, {2, 2}}, [](Tape& t, auto v) {
                 const std::vector<Var> parts{v[1], v[0], v[1]};
                 return weighted_sum(t, t.concat_rows(parts));
               }},
        OpCase{"gather_rows", {{3, 2}}, [](Tape& t, auto v) { return weighted_sum(t, t.gather_rows(v[0], kIds)); }},
        OpCase{"shift_rows_down", {{3, 2}}, [](Tape& t, auto v) { return weighted_sum(t, t.shift_rows_down(v[0])); }},
        OpCase{"softmax_cross_entropy", {{3, 4}}, [](Tape& t, auto v) { return t.softmax_cross_entropy(v[0], kTargets); }}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return info.param.name; });

TEST(Tape, SharedNodeIsVisitedOnce) {
  Tape tape;
  const Var x = tape.leaf(Matrix::from_rows({{0.3, -1.2}}));
  const Var y = tape.tanh(x);
  const auto g = tape.backward(tape.sum(tape.add(tape.mul(y, y), y)));
  for (std::size_t i = 0; i < 2; ++i) {
    const double t = std::tanh(tape.value(x).data()[i]);
    EXPECT_NEAR(g[x].data()[i], (2 * t + 1) * (1 - t * t), 1e-15);
  }
}

// Random graphs over four leaves (two 3x3 matrices, a 3x1 column, a scalar),
// parameters drawn U[-1, 1].
TEST(Tape, RandomGraphsMatchFiniteDifferences) {
  testing::Rand rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> ops(rng.index(2, 7));
    for (int& op : ops) op = static_cast<int>(rng.index(0, 9));
    const std::vector<Matrix> leaves{rng.matrix(3, 3), rng.matrix(3, 3), rng.matrix(3, 1),
                                     rng.matrix(1, 1)};
    const double err = gradient_error(leaves, [&](Tape& t, std::span<const Var> p) {
      Var x = p[0];
      for (int op : ops) {
        switch (op) {
          case 0: x = t.matmul(x, p[1]); break;
          case 1: x = t.mul(x, p[1]); break;
          case 2: x = t.tanh(x); break;
          case 3: x = t.softplus(x); break;
          case 4: x = t.activation(x, Activation::kGelu); break;
          case 5: x = t.scale_rows(x, p[2]); break;
          case 6: x = t.add_scalar(x, p[3]); break;
          case 7: x = t.causal_mask(t.matmul_nt(x, p[1])); break;
          case 8: x = t.matmul_tn(p[0], x); break;
          default: x = t.sub(x, t.normalize_rows(p[1], 0.0)); break;
        }
      }
      return t.sum(x);
    });
    EXPECT_LT(err, 1e-5) << "trial " << trial;
  }
}

}  // namespace
}  // namespace tnt::ad
