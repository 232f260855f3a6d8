// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/memory.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace tnt::memory {
namespace {

std::atomic<bool> g_sign_fault{false};

void require_dims(const FastWeights& w, std::size_t k, std::size_t v, const char* what) {
  if (k != w.dim() || v != w.dim()) {
    throw ShapeError(std::string(what) + ": expected vectors of dim " +
                     std::to_string(w.dim()));
  }
}

// The inner gradient of every supported f is a sum of rank-one terms:
//   linear: dW  = err (x) k
//   mlp2:   dW1 = delta (x) k,  dW2 = err (x) a
// where err = f(W, k) - v, a = act(W1 k), delta = (W2^T err) * act'(W1 k).
void gradient_factors(const FastWeights& w, std::span<const double> k,
                      std::span<const double> v, Vector& hidden, Vector& err,
                      Vector& delta) {
  if (w.arch == Arch::kLinear) {
    err = sub(matvec(w.w1, k), v);
  } else {
    const Vector z = matvec(w.w1, k);
    hidden = nonlinearity(z, w.activation);
    err = sub(matvec(w.w2, hidden), v);
    const Vector back = matvec_t(w.w2, err);
    delta = Vector(z.dim());
    for (std::size_t i = 0; i < z.dim(); ++i)
      delta[i] = back[i] * activate_derivative(z[i], w.activation);
  }
  if (g_sign_fault.load(std::memory_order_relaxed)) {
    for (double& x : err.span()) x = -x;
    for (double& x : delta.span()) x = -x;
  }
}

bool unit_or_zero(std::span<const double> x) {
  const double n = norm2(x);
  return n == 0.0 || std::abs(n - 1.0) <= 1e-9;
}

enum class Update { kSet, kAdd, kSub };

// m (op)= eta * (u[i] * r[j]); the product u[i] * r[j] is rounded before the
// scale, exactly as outer() followed by a scalar multiply.
template <Update kOp>
void scaled_outer(Matrix& m, double eta, std::span<const double> u,
                  std::span<const double> r) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    double* row = m.row(i).data();
    const double ui = u[i];
    for (std::size_t j = 0; j < r.size(); ++j) {
      const double g = eta * (ui * r[j]);
      if constexpr (kOp == Update::kSet) {
        row[j] = g;
      } else if constexpr (kOp == Update::kAdd) {
        row[j] = row[j] + g;
      } else {
        row[j] = row[j] - g;
      }
    }
  }
}

template <Update kOp>
void apply_gradient(FastWeights& target, const FastWeights& w, double eta,
                    std::span<const double> k, const Vector& hidden,
                    const Vector& err, const Vector& delta) {
  if (w.arch == Arch::kLinear) {
    scaled_outer<kOp>(target.w1, eta, err.span(), k);
  } else {
    scaled_outer<kOp>(target.w1, eta, delta.span(), k);
    scaled_outer<kOp>(target.w2, eta, err.span(), hidden.span());
  }
}

void subtract_into(FastWeights& out, const FastWeights& a, const FastWeights& b) {
  auto o1 = out.w1.data();
  auto a1 = a.w1.data();
  auto b1 = b.w1.data();
  for (std::size_t i = 0; i < o1.size(); ++i) o1[i] = a1[i] - b1[i];
  auto o2 = out.w2.data();
  auto a2 = a.w2.data();
  auto b2 = b.w2.data();
  for (std::size_t i = 0; i < o2.size(); ++i) o2[i] = a2[i] - b2[i];
}

}  // namespace

std::string_view to_string(Arch arch) {
  return arch == Arch::kLinear ? "linear" : "mlp2";
}

Arch arch_from_string(std::string_view name) {
  if (name == "linear") return Arch::kLinear;
  if (name == "mlp2") return Arch::kMlp2;
  throw ConfigError("unknown memory architecture '" + std::string(name) + "'");
}

FastWeights FastWeights::linear(Matrix w) {
  if (w.rows() != w.cols()) throw ShapeError("linear fast weights must be square");
  FastWeights f;
  f.arch = Arch::kLinear;
  f.w1 = std::move(w);
  return f;
}

FastWeights FastWeights::mlp2(Matrix w1, Matrix w2, Activation act) {
  if (w2.rows() != w1.cols() || w2.cols() != w1.rows())
    throw ShapeError("mlp2 fast weights: W1 (h x d) and W2 (d x h) disagree");
  FastWeights f;
  f.arch = Arch::kMlp2;
  f.activation = act;
  f.w1 = std::move(w1);
  f.w2 = std::move(w2);
  return f;
}

FastWeights FastWeights::zeros(Arch arch, std::size_t d, std::size_t hidden,
                               Activation act) {
  if (arch == Arch::kLinear) return linear(Matrix(d, d));
  return mlp2(Matrix(hidden, d), Matrix(d, hidden), act);
}

FastWeights FastWeights::random(Arch arch, std::size_t d, std::size_t hidden,
                                Activation act, double scale, std::mt19937_64& rng) {
  FastWeights f = zeros(arch, d, hidden, act);
  std::normal_distribution<double> n1(0.0, scale / std::sqrt(static_cast<double>(d)));
  for (double& x : f.w1.data()) x = n1(rng);
  if (arch == Arch::kMlp2) {
    std::normal_distribution<double> n2(0.0, scale / std::sqrt(static_cast<double>(hidden)));
    for (double& x : f.w2.data()) x = n2(rng);
  }
  return f;
}

bool FastWeights::finite() const { return all_finite(w1.data()) && all_finite(w2.data()); }

std::vector<double> FastWeights::flatten() const {
  std::vector<double> flat(w1.data().begin(), w1.data().end());
  flat.insert(flat.end(), w2.data().begin(), w2.data().end());
  return flat;
}

void FastWeights::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("FastWeights::assign: size mismatch");
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(w1.size()),
            w1.data().begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(w1.size()), flat.end(),
            w2.data().begin());
}

void SequenceBatch::validate() const {
  const std::size_t l = queries.rows();
  const std::size_t d = queries.cols();
  if (keys.rows() != l || values.rows() != l || etas.size() != l)
    throw ShapeError("SequenceBatch: streams have different lengths");
  if (keys.cols() != d || values.cols() != d)
    throw ShapeError("SequenceBatch: streams have different dimensions");
  for (double eta : etas) {
    if (!(eta >= 0.0) || !std::isfinite(eta))
      throw ConfigError("SequenceBatch: learning rates must be finite and non-negative");
  }
  if (normalized) {
    for (std::size_t t = 0; t < l; ++t) {
      if (!unit_or_zero(keys.row(t)) || !unit_or_zero(queries.row(t)))
        throw ConfigError("SequenceBatch: normalized flag set but token " +
                          std::to_string(t) + " is not unit norm");
    }
  }
}

void ChunkSpec::validate() const {
  if (size == 0) throw ConfigError("chunk size must be >= 1");
}

std::size_t xi(std::size_t i, std::size_t j) {
  if (j == 0) throw ConfigError("xi: chunk size must be >= 1");
  return i - (i % j);
}

Vector forward(const FastWeights& w, std::span<const double> x) {
  if (x.size() != w.dim()) throw ShapeError("memory forward: input dimension mismatch");
  if (w.arch == Arch::kLinear) return matvec(w.w1, x);
  return matvec(w.w2, nonlinearity(matvec(w.w1, x), w.activation));
}

double inner_loss(const FastWeights& w, std::span<const double> k,
                  std::span<const double> v) {
  require_dims(w, k.size(), v.size(), "inner_loss");
  const Vector err = sub(forward(w, k), v);
  return 0.5 * dot(err.span(), err.span());
}

FastWeights inner_grad(const FastWeights& w, std::span<const double> k,
                       std::span<const double> v) {
  require_dims(w, k.size(), v.size(), "inner_grad");
  Vector hidden, err, delta;
  gradient_factors(w, k, v, hidden, err, delta);
  FastWeights g = w;
  if (w.arch == Arch::kLinear) {
    g.w1 = outer(err.span(), k);
  } else {
    g.w1 = outer(delta.span(), k);
    g.w2 = outer(err.span(), hidden.span());
  }
  return g;
}

std::vector<FastWeights> sequential_compress(const FastWeights& w0,
                                             const SequenceBatch& batch) {
  batch.validate();
  if (batch.length() > 0 && batch.dim() != w0.dim())
    throw ShapeError("sequential_compress: batch dimension does not match weights");
  std::vector<FastWeights> states;
  states.reserve(batch.length());
  FastWeights w = w0;
  Vector hidden, err, delta;
  for (std::size_t t = 0; t < batch.length(); ++t) {
    gradient_factors(w, batch.key(t), batch.value(t), hidden, err, delta);
    FastWeights next = w;
    apply_gradient<Update::kSub>(next, w, batch.etas[t], batch.key(t), hidden, err, delta);
    w = std::move(next);
    states.push_back(w);
  }
  return states;
}

void ChunkAccumulator::restart(const FastWeights& chunk_start) {
  start_ = chunk_start;
  if (!sum_.w1.same_shape(start_.w1) || !sum_.w2.same_shape(start_.w2)) sum_ = start_;
  current_ = start_;
  first_ = true;
}

void ChunkAccumulator::accumulate(std::span<const double> k, std::span<const double> v,
                                  double eta) {
  require_dims(start_, k.size(), v.size(), "ChunkAccumulator::accumulate");
  gradient_factors(start_, k, v, scratch_hidden_, scratch_err_, scratch_delta_);
  if (first_) {
    apply_gradient<Update::kSet>(sum_, start_, eta, k, scratch_hidden_, scratch_err_,
                                 scratch_delta_);
    first_ = false;
  } else {
    apply_gradient<Update::kAdd>(sum_, start_, eta, k, scratch_hidden_, scratch_err_,
                                 scratch_delta_);
  }
}

const FastWeights& ChunkAccumulator::materialize() {
  if (!first_) subtract_into(current_, start_, sum_);
  return current_;
}

const FastWeights& ChunkAccumulator::absorb(std::span<const double> k,
                                            std::span<const double> v, double eta) {
  accumulate(k, v, eta);
  return materialize();
}

std::vector<FastWeights> chunkwise_compress(const FastWeights& w0,
                                            const SequenceBatch& batch,
                                            ChunkSpec spec) {
  spec.validate();
  batch.validate();
  if (batch.length() > 0 && batch.dim() != w0.dim())
    throw ShapeError("chunkwise_compress: batch dimension does not match weights");
  std::vector<FastWeights> states;
  states.reserve(batch.length());
  ChunkAccumulator acc;
  acc.restart(w0);
  for (std::size_t t = 0; t < batch.length(); ++t) {
    if (t > 0 && xi(t, spec.size) == t) acc.restart(acc.current());
    states.push_back(acc.absorb(batch.key(t), batch.value(t), batch.etas[t]));
  }
  return states;
}

std::vector<Vector> chunkwise_retrieve(std::span<const FastWeights> states,
                                       const SequenceBatch& batch) {
  if (states.size() != batch.length())
    throw ShapeError("chunkwise_retrieve: one state per token is required");
  std::vector<Vector> out;
  out.reserve(states.size());
  for (std::size_t t = 0; t < states.size(); ++t) out.push_back(forward(states[t], batch.query(t)));
  return out;
}

void set_inner_grad_sign_fault(bool enabled) { g_sign_fault.store(enabled); }
bool inner_grad_sign_fault() { return g_sign_fault.load(); }

}  // namespace tnt::memory
