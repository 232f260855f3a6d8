// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tnt::ad {
namespace {

void accumulate(Matrix& into, const Matrix& g) {
  if (into.empty()) {
    into = g;
  } else {
    into += g;
  }
}

Matrix& slot(std::vector<Matrix>& grads, Var v, std::size_t rows, std::size_t cols) {
  Matrix& g = grads[v.id];
  if (g.empty()) g = Matrix(rows, cols);
  return g;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string("tape ") + op + ": shape mismatch");
}

}  // namespace

Var Tape::push(Node n) {
  if (nodes_.size() >= Var::kInvalid) throw std::length_error("tape is full");
  if (n.op != Op::kLeaf && n.op != Op::kConstant) {
    n.requires_grad = (n.a.valid() && needs(n.a)) || (n.b.valid() && needs(n.b));
    for (Var p : n.parts) n.requires_grad = n.requires_grad || needs(p);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("tape: invalid variable");
  return nodes_[v.id];
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

double Tape::scalar(Var v) const {
  const Matrix& m = node(v).value;
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("tape: value is not a scalar");
  return m(0, 0);
}

Var Tape::add(Var a, Var b) {
  check_same_shape(node(a).value, node(b).value, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = node(a).value + node(b).value;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(node(a).value, node(b).value, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = node(a).value - node(b).value;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Matrix& x = node(a).value;
  const Matrix& y = node(b).value;
  check_same_shape(x, y, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.value = x;
  auto out = n.value.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * ys[i];
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = s;
  n.value = s * node(a).value;
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, Var s) {
  const Matrix& sv = node(s).value;
  if (sv.rows() != 1 || sv.cols() != 1) throw ShapeError("tape add_scalar: expected 1x1");
  Node n;
  n.op = Op::kAddScalar;
  n.a = a;
  n.b = s;
  n.value = node(a).value;
  for (double& x : n.value.data()) x = x + sv(0, 0);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.value = tnt::matmul(node(a).value, node(b).value);
  return push(std::move(n));
}

Var Tape::matmul_nt(Var a, Var b) {
  Node n;
  n.op = Op::kMatmulNT;
  n.a = a;
  n.b = b;
  n.value = tnt::matmul_nt(node(a).value, node(b).value);
  return push(std::move(n));
}

Var Tape::matmul_tn(Var a, Var b) {
  Node n;
  n.op = Op::kMatmulTN;
  n.a = a;
  n.b = b;
  n.value = tnt::matmul_tn(node(a).value, node(b).value);
  return push(std::move(n));
}

Var Tape::scale_rows(Var a, Var col) {
  const Matrix& x = node(a).value;
  const Matrix& c = node(col).value;
  if (c.cols() != 1 || c.rows() != x.rows()) throw ShapeError("tape scale_rows: bad column");
  Node n;
  n.op = Op::kScaleRows;
  n.a = a;
  n.b = col;
  n.value = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (double& v : n.value.row(i)) v = c(i, 0) * v;
  return push(std::move(n));
}

Var Tape::causal_mask(Var a) {
  Node n;
  n.op = Op::kCausalMask;
  n.a = a;
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.rows(); ++i)
    for (std::size_t j = i + 1; j < n.value.cols(); ++j) n.value(i, j) = 0.0;
  return push(std::move(n));
}

Var Tape::activation(Var a, Activation kind) {
  Node n;
  n.op = Op::kActivation;
  n.a = a;
  n.act = kind;
  n.value = node(a).value;
  for (double& x : n.value.data()) x = activate(x, kind);
  return push(std::move(n));
}

Var Tape::activation_derivative(Var a, Activation kind) {
  Node n;
  n.op = Op::kActivationDerivative;
  n.a = a;
  n.act = kind;
  n.value = node(a).value;
  for (double& x : n.value.data()) x = activate_derivative(x, kind);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.value = node(a).value;
  for (double& x : n.value.data()) x = std::tanh(x);
  return push(std::move(n));
}

Var Tape::softplus(Var a) {
  Node n;
  n.op = Op::kSoftplus;
  n.a = a;
  n.value = node(a).value;
  for (double& x : n.value.data()) x = tnt::softplus(x);
  return push(std::move(n));
}

Var Tape::normalize_rows(Var a, double eps) {
  const Matrix& x = node(a).value;
  Node n;
  n.op = Op::kNormalizeRows;
  n.a = a;
  n.value = x;
  n.saved = Matrix(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double n2 = dot(x.row(i), x.row(i)) + eps;
    const double r = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
    n.saved(i, 0) = r;
    for (double& v : n.value.row(i)) v = r * v;
  }
  return push(std::move(n));
}

Var Tape::rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = node(a).value;
  if (begin + count > x.rows()) throw ShapeError("tape rows: range out of bounds");
  Node n;
  n.op = Op::kRows;
  n.a = a;
  n.offset = begin;
  const auto src = x.data().subspan(begin * x.cols(), count * x.cols());
  n.value = Matrix(count, x.cols(), std::vector<double>(src.begin(), src.end()));
  return push(std::move(n));
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("tape concat_rows: no parts");
  const std::size_t cols = node(parts[0]).value.cols();
  std::vector<double> data;
  std::size_t total = 0;
  for (Var p : parts) {
    const Matrix& m = node(p).value;
    if (m.cols() != cols) throw ShapeError("tape concat_rows: column mismatch");
    data.insert(data.end(), m.data().begin(), m.data().end());
    total += m.rows();
  }
  Node n;
  n.op = Op::kConcatRows;
  n.parts.assign(parts.begin(), parts.end());
  n.value = Matrix(total, cols, std::move(data));
  return push(std::move(n));
}

Var Tape::gather_rows(Var table, std::span<const std::size_t> ids) {
  const Matrix& t = node(table).value;
  Node n;
  n.op = Op::kGatherRows;
  n.a = table;
  n.indices.assign(ids.begin(), ids.end());
  n.value = Matrix(ids.size(), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= t.rows()) throw ShapeError("tape gather_rows: index out of range");
    std::copy(t.row(ids[i]).begin(), t.row(ids[i]).end(), n.value.row(i).begin());
  }
  return push(std::move(n));
}

Var Tape::shift_rows_down(Var a) {
  const Matrix& x = node(a).value;
  Node n;
  n.op = Op::kShiftRowsDown;
  n.a = a;
  n.value = Matrix(x.rows(), x.cols());
  for (std::size_t i = 1; i < x.rows(); ++i)
    std::copy(x.row(i - 1).begin(), x.row(i - 1).end(), n.value.row(i).begin());
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.value = Matrix(1, 1, tnt::sum(node(a).value.data()));
  return push(std::move(n));
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Matrix& z = node(logits).value;
  if (targets.size() != z.rows() || z.rows() == 0)
    throw ShapeError("tape softmax_cross_entropy: target count mismatch");
  Node n;
  n.op = Op::kSoftmaxCrossEntropy;
  n.a = logits;
  n.indices.assign(targets.begin(), targets.end());
  n.saved = Matrix(z.rows(), z.cols());
  double total = 0.0;
  for (std::size_t t = 0; t < z.rows(); ++t) {
    if (targets[t] >= z.cols()) throw ShapeError("tape softmax_cross_entropy: bad target");
    const auto row = z.row(t);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < row.size(); ++j) n.saved(t, j) = std::exp(row[j] - lse);
    total += lse - row[targets[t]];
  }
  n.value = Matrix(1, 1, total / static_cast<double>(z.rows()));
  return push(std::move(n));
}

Gradients Tape::backward(Var loss, double seed) const {
  const Node& terminal = node(loss);
  if (terminal.value.rows() != 1 || terminal.value.cols() != 1)
    throw ShapeError("tape backward: terminal node is not a scalar");

  std::vector<Matrix> grads(nodes_.size());
  grads[loss.id] = Matrix(1, 1, seed);

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || grads[i].empty()) continue;
    const Matrix& g = grads[i];
    const bool ga = n.a.valid() && needs(n.a);
    const bool gb = n.b.valid() && needs(n.b);
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kAdd:
        if (ga) accumulate(grads[n.a.id], g);
        if (gb) accumulate(grads[n.b.id], g);
        break;
      case Op::kSub:
        if (ga) accumulate(grads[n.a.id], g);
        if (gb) accumulate(grads[n.b.id], -1.0 * g);
        break;
      case Op::kMul: {
        const Matrix& x = nodes_[n.a.id].value;
        const Matrix& y = nodes_[n.b.id].value;
        if (ga) {
          Matrix& out = slot(grads, n.a, x.rows(), x.cols());
          for (std::size_t k = 0; k < g.size(); ++k) out.data()[k] += g.data()[k] * y.data()[k];
        }
        if (gb) {
          Matrix& out = slot(grads, n.b, y.rows(), y.cols());
          for (std::size_t k = 0; k < g.size(); ++k) out.data()[k] += g.data()[k] * x.data()[k];
        }
        break;
      }
      case Op::kScale:
        if (ga) accumulate(grads[n.a.id], n.scalar * g);
        break;
      case Op::kAddScalar:
        if (ga) accumulate(grads[n.a.id], g);
        if (gb) accumulate(grads[n.b.id], Matrix(1, 1, tnt::sum(g.data())));
        break;
      case Op::kMatmul: {
        const Matrix& x = nodes_[n.a.id].value;
        const Matrix& y = nodes_[n.b.id].value;
        if (ga) accumulate(grads[n.a.id], tnt::matmul_nt(g, y));
        if (gb) accumulate(grads[n.b.id], tnt::matmul_tn(x, g));
        break;
      }
      case Op::kMatmulNT: {
        const Matrix& x = nodes_[n.a.id].value;
        const Matrix& y = nodes_[n.b.id].value;
        if (ga) accumulate(grads[n.a.id], tnt::matmul(g, y));
        if (gb) accumulate(grads[n.b.id], tnt::matmul_tn(g, x));
        break;
      }
      case Op::kMatmulTN: {
        const Matrix& x = nodes_[n.a.id].value;
        const Matrix& y = nodes_[n.b.id].value;
        if (ga) accumulate(grads[n.a.id], tnt::matmul_nt(y, g));
        if (gb) accumulate(grads[n.b.id], tnt::matmul(x, g));
        break;
      }
      case Op::kScaleRows: {
        const Matrix& x = nodes_[n.a.id].value;
        const Matrix& c = nodes_[n.b.id].value;
        if (ga) {
          Matrix& out = slot(grads, n.a, x.rows(), x.cols());
          for (std::size_t r = 0; r < x.rows(); ++r) {
            auto o = out.row(r);
            auto gr = g.row(r);
            for (std::size_t j = 0; j < o.size(); ++j) o[j] += c(r, 0) * gr[j];
          }
        }
        if (gb) {
          Matrix& out = slot(grads, n.b, c.rows(), 1);
          for (std::size_t r = 0; r < x.rows(); ++r) out(r, 0) += dot(g.row(r), x.row(r));
        }
        break;
      }
      case Op::kCausalMask:
        if (ga) {
          Matrix masked = g;
          for (std::size_t r = 0; r < masked.rows(); ++r)
            for (std::size_t c = r + 1; c < masked.cols(); ++c) masked(r, c) = 0.0;
          accumulate(grads[n.a.id], masked);
        }
        break;
      case Op::kActivation:
      case Op::kActivationDerivative:
        if (ga) {
          const Matrix& x = nodes_[n.a.id].value;
          Matrix& out = slot(grads, n.a, x.rows(), x.cols());
          const bool second = n.op == Op::kActivationDerivative;
          for (std::size_t k = 0; k < g.size(); ++k) {
            const double xv = x.data()[k];
            const double d = second ? activate_second_derivative(xv, n.act)
                                    : activate_derivative(xv, n.act);
            out.data()[k] += g.data()[k] * d;
          }
        }
        break;
      case Op::kTanh:
        if (ga) {
          Matrix& out = slot(grads, n.a, g.rows(), g.cols());
          for (std::size_t k = 0; k < g.size(); ++k) {
            const double y = n.value.data()[k];
            out.data()[k] += g.data()[k] * (1.0 - y * y);
          }
        }
        break;
      case Op::kSoftplus:
        if (ga) {
          const Matrix& x = nodes_[n.a.id].value;
          Matrix& out = slot(grads, n.a, g.rows(), g.cols());
          for (std::size_t k = 0; k < g.size(); ++k)
            out.data()[k] += g.data()[k] * sigmoid(x.data()[k]);
        }
        break;
      case Op::kNormalizeRows:
        if (ga) {
          Matrix& out = slot(grads, n.a, g.rows(), g.cols());
          for (std::size_t r = 0; r < g.rows(); ++r) {
            const auto y = n.value.row(r);
            const auto gr = g.row(r);
            const double yg = dot(y, gr);
            const double scale = n.saved(r, 0);
            auto o = out.row(r);
            for (std::size_t j = 0; j < o.size(); ++j) o[j] += scale * (gr[j] - y[j] * yg);
          }
        }
        break;
      case Op::kRows:
        if (ga) {
          const Matrix& x = nodes_[n.a.id].value;
          Matrix& out = slot(grads, n.a, x.rows(), x.cols());
          auto dst = out.data().subspan(n.offset * x.cols(), g.size());
          for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g.data()[k];
        }
        break;
      case Op::kConcatRows: {
        std::size_t row = 0;
        for (Var p : n.parts) {
          const Matrix& m = nodes_[p.id].value;
          if (needs(p)) {
            Matrix& out = slot(grads, p, m.rows(), m.cols());
            auto src = g.data().subspan(row * g.cols(), m.size());
            for (std::size_t k = 0; k < m.size(); ++k) out.data()[k] += src[k];
          }
          row += m.rows();
        }
        break;
      }
      case Op::kGatherRows:
        if (ga) {
          const Matrix& t = nodes_[n.a.id].value;
          Matrix& out = slot(grads, n.a, t.rows(), t.cols());
          for (std::size_t r = 0; r < n.indices.size(); ++r) {
            auto o = out.row(n.indices[r]);
            auto gr = g.row(r);
            for (std::size_t j = 0; j < o.size(); ++j) o[j] += gr[j];
          }
        }
        break;
      case Op::kShiftRowsDown:
        if (ga) {
          Matrix& out = slot(grads, n.a, g.rows(), g.cols());
          for (std::size_t r = 1; r < g.rows(); ++r) {
            auto o = out.row(r - 1);
            auto gr = g.row(r);
            for (std::size_t j = 0; j < o.size(); ++j) o[j] += gr[j];
          }
        }
        break;
      case Op::kSum:
        if (ga) {
          const Matrix& x = nodes_[n.a.id].value;
          accumulate(grads[n.a.id], Matrix(x.rows(), x.cols(), g(0, 0)));
        }
        break;
      case Op::kSoftmaxCrossEntropy:
        if (ga) {
          Matrix d = n.saved;
          const double w = g(0, 0) / static_cast<double>(d.rows());
          for (std::size_t t = 0; t < d.rows(); ++t) {
            d(t, n.indices[t]) -= 1.0;
            for (double& v : d.row(t)) v = w * v;
          }
          accumulate(grads[n.a.id], d);
        }
        break;
    }
  }
  return Gradients(std::move(grads));
}

}  // namespace tnt::ad
