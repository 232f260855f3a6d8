// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Deep memory module: fast-weight network f(W, x), its inner (test-time)
// loss, and the sequential and chunkwise compression/retrieval engines.
//
// Conventions:
//   * inner_loss(W, k, v) = 1/2 |f(W, k) - v|^2, so the linear-memory
//     gradient is (W k - v) k^T with no factor of two.
//   * f has no biases: zero weights always retrieve zero.
//   * Tokens are 0-based. Token t belongs to chunk floor(t / C); the state
//     returned for token t is the state after absorbing (k_t, v_t), which is
//     also the state used to answer q_t.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tnt/numerics.hpp"

namespace tnt::memory {

enum class Arch { kLinear, kMlp2 };

std::string_view to_string(Arch arch);
Arch arch_from_string(std::string_view name);

struct FastWeights {
  Arch arch = Arch::kLinear;
  Activation activation = Activation::kTanh;
  Matrix w1;  // linear: W (d x d); mlp2: first layer (h x d)
  Matrix w2;  // mlp2 only: second layer (d x h)

  static FastWeights linear(Matrix w);
  static FastWeights mlp2(Matrix w1, Matrix w2, Activation act);
  static FastWeights zeros(Arch arch, std::size_t d, std::size_t hidden,
                           Activation act = Activation::kTanh);
  // Entries drawn from N(0, scale^2 / fan_in).
  static FastWeights random(Arch arch, std::size_t d, std::size_t hidden,
                            Activation act, double scale, std::mt19937_64& rng);

  std::size_t dim() const { return w1.cols(); }
  std::size_t hidden() const { return arch == Arch::kMlp2 ? w1.rows() : 0; }
  std::size_t parameter_count() const { return w1.size() + w2.size(); }
  bool finite() const;

  // w1 entries followed by w2 entries.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const FastWeights&) const = default;
};

// Default mlp2 hidden width.
inline std::size_t default_hidden(std::size_t d) { return 2 * d; }

// Per-token query/key/value streams (rows of L x d matrices) and per-token
// inner learning rates.
struct SequenceBatch {
  Matrix queries;
  Matrix keys;
  Matrix values;
  std::vector<double> etas;
  // Keys and queries are unit L2 norm (or exactly zero); Q-K projection drops
  // its denominator.
  bool normalized = false;

  std::size_t length() const { return queries.rows(); }
  std::size_t dim() const { return queries.cols(); }
  std::span<const double> query(std::size_t t) const { return queries.row(t); }
  std::span<const double> key(std::size_t t) const { return keys.row(t); }
  std::span<const double> value(std::size_t t) const { return values.row(t); }

  // Throws ShapeError / ConfigError when a documented invariant fails.
  void validate() const;
};

struct ChunkSpec {
  std::size_t size = 1;
  void validate() const;
};

// Start of the chunk containing index i for chunk size j: i - (i mod j).
std::size_t xi(std::size_t i, std::size_t j);

Vector forward(const FastWeights& w, std::span<const double> x);
double inner_loss(const FastWeights& w, std::span<const double> k,
                  std::span<const double> v);
FastWeights inner_grad(const FastWeights& w, std::span<const double> k,
                       std::span<const double> v);

// W_t = W_{t-1} - eta_t * grad(W_{t-1}; k_t, v_t). Returns W_0 .. W_{L-1}
// in 0-based token order (the state after each token).
std::vector<FastWeights> sequential_compress(const FastWeights& w0,
                                             const SequenceBatch& batch);

// Within each chunk every gradient is taken at the chunk-start state; the
// state for token t is the chunk-start state minus the running sum of
// eta * grad up to t. The last state of a chunk seeds the next chunk.
std::vector<FastWeights> chunkwise_compress(const FastWeights& w0,
                                            const SequenceBatch& batch,
                                            ChunkSpec spec);

// o_t = f(states[t], q_t).
std::vector<Vector> chunkwise_retrieve(std::span<const FastWeights> states,
                                       const SequenceBatch& batch);

// Streaming form of the chunkwise rule, shared with the hierarchy engines.
// restart() fixes the state at which all gradients of the chunk are taken;
// absorb() adds one token and returns its state.
class ChunkAccumulator {
 public:
  void restart(const FastWeights& chunk_start);
  const FastWeights& absorb(std::span<const double> k, std::span<const double> v,
                            double eta);
  // absorb() without materializing the per-token state; call materialize()
  // once the chunk is done.
  void accumulate(std::span<const double> k, std::span<const double> v, double eta);
  const FastWeights& materialize();
  const FastWeights& chunk_start() const { return start_; }
  const FastWeights& current() const { return current_; }

 private:
  FastWeights start_;
  FastWeights sum_;
  FastWeights current_;
  bool first_ = true;
  Vector scratch_hidden_;
  Vector scratch_err_;
  Vector scratch_delta_;
};

// Test hook for the invariant suite's fault-injection mode: when enabled,
// inner_grad and the compression engines use the negated gradient.
void set_inner_grad_sign_fault(bool enabled);
bool inner_grad_sign_fault();

}  // namespace tnt::memory
