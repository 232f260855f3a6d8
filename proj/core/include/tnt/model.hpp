// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Single-layer sequence model around the hierarchy.
//
//   x_t   = E[token_t]
//   q_t   = normalize(W_q x_t)
//   k_t   = normalize(W_k x_t + W_s x_{t-1})     (x_{-1} = 0)
//   v_t   = W_v x_t
//   eta_t = cap * tanh(softplus(w . x_t + b) / cap), one (w, b) per module
//   o_t   = hierarchy output at t
//   logits_t = R (o_t + x_t)
//
// The loss of a sequence is the mean next-token cross-entropy over positions
// 0 .. L-2. Two evaluators exist: a value path through the hierarchy engines
// (used for inference and evaluation) and a tape path built from chunk-level
// matrix products (used for gradients). They agree to roundoff.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tnt/hierarchy.hpp"
#include "tnt/parallel_exec.hpp"
#include "tnt/tasks.hpp"

namespace tnt::model {

using memory::FastWeights;

struct LocalConfig {
  std::size_t chunk = 8;
  std::size_t shard = 256;
  bool operator==(const LocalConfig&) const = default;
};

struct ModelConfig {
  std::size_t vocab = 64;
  std::size_t dim = 64;
  memory::Arch arch = memory::Arch::kLinear;
  Activation activation = Activation::kTanh;
  std::size_t hidden = 0;  // mlp2 width; 0 selects default_hidden(dim)
  std::size_t global_chunk = 256;
  bool global_enabled = true;
  std::vector<LocalConfig> locals{{8, 256}, {16, 256}};
  hierarchy::ProjectionMode projection = hierarchy::ProjectionMode::kShardAccumulate;
  bool normalize_qk = true;
  bool key_shift = true;
  double eta_cap = 0.1;    // <= 0 disables the cap
  double eta_init = 0.05;  // softplus(b) at initialization
  double init_scale = 1.0;

  void validate() const;
  std::size_t hidden_width() const;
  std::size_t module_count() const { return 1 + locals.size(); }
  bool operator==(const ModelConfig&) const = default;
};

// Same config with every local chunk size replaced by `chunk`, clamped to the
// local's shard length. Throws ConfigError when the result does not divide
// the shard length.
ModelConfig with_local_chunk(const ModelConfig& config, std::size_t chunk);
ModelConfig with_local_chunks(const ModelConfig& config, std::span<const std::size_t> chunks);

struct SlowWeights {
  Matrix embedding;  // vocab x d
  Matrix wq, wk, wv, wshift;  // d x d
  Matrix readout;  // vocab x d
  std::vector<Matrix> eta_w;  // 1 x d per module, global first
  std::vector<Matrix> eta_b;  // 1 x 1 per module
  FastWeights global_init;
  std::vector<FastWeights> local_inits;

  static SlowWeights initialize(const ModelConfig& config, std::uint64_t seed);
  // Shapes agree with `config` and every entry is finite.
  void check(const ModelConfig& config) const;
  bool finite() const;
  bool operator==(const SlowWeights&) const = default;
};

// Parameter groups in a fixed order. `local` marks the groups owned by a
// local memory (its initial state and its eta parameters).
struct ParamRef {
  std::string name;
  Matrix* value;
  bool local;
};
struct ConstParamRef {
  std::string name;
  const Matrix* value;
  bool local;
};
std::vector<ParamRef> parameters(SlowWeights& sw);
std::vector<ConstParamRef> parameters(const SlowWeights& sw);
std::size_t parameter_count(const SlowWeights& sw);
std::vector<double> flatten(const SlowWeights& sw);
void assign(SlowWeights& sw, std::span<const double> flat);

double compute_eta(std::span<const double> w, double b, std::span<const double> x, double cap);

hierarchy::HierarchyConfig hierarchy_config(const ModelConfig& config, const SlowWeights& sw);

struct Streams {
  Matrix embedded;  // L x d
  memory::SequenceBatch batch;
  hierarchy::ModuleRates rates;
};

// Throws ConfigError for tokens outside the vocabulary.
Streams project(const SlowWeights& sw, const ModelConfig& config,
                std::span<const std::size_t> tokens);

// L x vocab logits through the hierarchy value path.
Matrix forward_sequence(const SlowWeights& sw, const ModelConfig& config,
                        std::span<const std::size_t> tokens);
std::vector<Matrix> forward_batch(const SlowWeights& sw, const ModelConfig& config,
                                  std::span<const tasks::Sequence> sequences,
                                  exec::ShardedExecutor& executor);

// Mean cross-entropy of logits[t] against tokens[t + 1], t < L - 1.
double sequence_loss(const Matrix& logits, std::span<const std::size_t> tokens);
double loss_value(const SlowWeights& sw, const ModelConfig& config,
                  std::span<const std::size_t> tokens);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<Matrix> grads;  // aligned with parameters()
};

// Tape-evaluated loss and gradient of one sequence.
LossAndGradient loss_and_gradient(const SlowWeights& sw, const ModelConfig& config,
                                  std::span<const std::size_t> tokens);
// Mean over sequences; per-sequence tapes run on the pool, the reduction runs
// in sequence order.
LossAndGradient batch_loss_and_gradient(const SlowWeights& sw, const ModelConfig& config,
                                        std::span<const tasks::Sequence> sequences,
                                        exec::WorkerPool& pool);

enum class Stage { kStage1, kStage2 };
enum class TrainableSet { kLocalOnly, kAll };

std::string_view to_string(Stage stage);
Stage stage_from_string(std::string_view name);
std::string_view to_string(TrainableSet set);
TrainableSet trainable_set_from_string(std::string_view name);

struct TrainSchedule {
  Stage stage = Stage::kStage1;
  std::size_t steps = 500;
  double learning_rate = 0.5;
  std::size_t batch_size = 8;
  std::vector<std::size_t> stage2_chunks;  // C_L' per local (stage 2)
  TrainableSet trainable = TrainableSet::kLocalOnly;
  double weight_decay = 0.0;  // decoupled
  double grad_clip = 1.0;     // global L2 norm; <= 0 disables
  std::uint64_t data_offset = 0;

  // Stage 2 needs one C_L' per local with 1 <= C_L' <= C_L and C_L' | S_L.
  void validate(const ModelConfig& config) const;
  // The config the schedule trains: stage 2 swaps in C_L'.
  ModelConfig effective_config(const ModelConfig& config) const;
  // Stage-2 default budget: 5% of the stage-1 step count, at least one step.
  static std::size_t stage2_default_steps(std::size_t stage1_steps);
};

struct TrainResult {
  SlowWeights weights;
  ModelConfig config;          // effective config
  std::vector<double> losses;  // batch loss before each step
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

// Plain gradient descent on the tape gradient. Throws DivergenceError when a
// loss or a weight becomes non-finite.
TrainResult train(SlowWeights sw, const TrainSchedule& schedule, const tasks::TaskSpec& task,
                  const ModelConfig& config, std::size_t workers = 1,
                  const StepCallback& on_step = {});

struct EvalPoint {
  std::size_t chunk = 0;
  double loss = 0.0;
  double perplexity = 0.0;
};

// Mean loss over `sequences` held-out sequences at the config's own chunk
// sizes.
double evaluate_loss(const SlowWeights& sw, const ModelConfig& config,
                     const tasks::TaskSpec& task, std::size_t sequences,
                     std::size_t workers = 1);

// One point per inference chunk size (applied to every local).
std::vector<EvalPoint> evaluate(const SlowWeights& sw, const ModelConfig& config,
                                const tasks::TaskSpec& task, std::span<const std::size_t> chunks,
                                std::size_t sequences, std::size_t workers = 1);

}  // namespace tnt::model
