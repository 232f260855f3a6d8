// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over dense matrix primitives.
//
// A Tape records every operation in execution order, so node inputs always
// precede the node. Each node keeps its forward value (and any saved
// intermediates) by value. backward() walks the list once in reverse and
// returns d(loss)/d(node) for every node that depends on a leaf.
//
// The tape is not thread-safe; build one tape per worker.

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "tnt/numerics.hpp"

namespace tnt::ad {

struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

class Gradients {
 public:
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}
  // Zero-shaped (empty) when the loss does not depend on v.
  const Matrix& operator[](Var v) const { return grads_.at(v.id); }
  bool has(Var v) const { return !grads_.at(v.id).empty(); }

 private:
  std::vector<Matrix> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var leaf(Matrix value);
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  // a + s, where s is 1x1 and broadcast over a.
  Var add_scalar(Var a, Var s);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a b^T
  Var matmul_tn(Var a, Var b);  // a^T b

  // Row i of a scaled by col(i, 0).
  Var scale_rows(Var a, Var col);
  // Zeroes entries above the diagonal.
  Var causal_mask(Var a);

  Var activation(Var a, Activation kind);
  Var activation_derivative(Var a, Activation kind);
  Var tanh(Var a);
  Var softplus(Var a);
  // Each row divided by sqrt(|row|^2 + eps).
  Var normalize_rows(Var a, double eps);

  Var rows(Var a, std::size_t begin, std::size_t count);
  Var concat_rows(std::span<const Var> parts);
  Var gather_rows(Var table, std::span<const std::size_t> ids);
  // out[0] = 0, out[t] = a[t-1].
  Var shift_rows_down(Var a);

  Var sum(Var a);
  // Mean over rows of -log softmax(logits[t])[targets[t]]; 1x1 result.
  Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets);

  // Requires a 1x1 terminal node; seeds d(loss)/d(loss) = seed.
  Gradients backward(Var loss, double seed = 1.0) const;

 private:
  enum class Op : std::uint8_t {
    kLeaf, kConstant, kAdd, kSub, kMul, kScale, kAddScalar, kMatmul, kMatmulNT,
    kMatmulTN, kScaleRows, kCausalMask, kActivation, kActivationDerivative,
    kTanh, kSoftplus, kNormalizeRows, kRows, kConcatRows, kGatherRows,
    kShiftRowsDown, kSum, kSoftmaxCrossEntropy,
  };

  struct Node {
    Op op = Op::kConstant;
    Var a;
    Var b;
    Matrix value;
    Matrix saved;  // op-specific intermediate (softmax probs, row scales)
    double scalar = 0.0;
    std::size_t offset = 0;
    Activation act = Activation::kTanh;
    std::vector<std::size_t> indices;
    std::vector<Var> parts;
    bool requires_grad = false;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
};

}  // namespace tnt::ad
