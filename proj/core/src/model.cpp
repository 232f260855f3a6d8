// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <random>
#include <string>

#include "tnt/tape.hpp"

namespace tnt::model {
namespace {

using hierarchy::ProjectionMode;

enum class Role { kEmbedding, kWq, kWk, kWv, kWshift, kReadout, kEtaW, kEtaB, kInitW1, kInitW2 };

// Calls fn(name, matrix, local, role, module) for every parameter group in
// the canonical order. Module 0 is the global memory, module i + 1 local i.
template <class SW, class Fn>
void visit_params(SW& sw, Fn&& fn) {
  fn("embedding", sw.embedding, false, Role::kEmbedding, 0);
  fn("wq", sw.wq, false, Role::kWq, 0);
  fn("wk", sw.wk, false, Role::kWk, 0);
  fn("wv", sw.wv, false, Role::kWv, 0);
  fn("wshift", sw.wshift, false, Role::kWshift, 0);
  fn("readout", sw.readout, false, Role::kReadout, 0);
  for (std::size_t m = 0; m < sw.eta_w.size(); ++m) {
    const std::string tag = m == 0 ? "global" : "local" + std::to_string(m - 1);
    fn("eta_w." + tag, sw.eta_w[m], m > 0, Role::kEtaW, m);
    fn("eta_b." + tag, sw.eta_b[m], m > 0, Role::kEtaB, m);
  }
  fn("global_init.w1", sw.global_init.w1, false, Role::kInitW1, 0);
  if (sw.global_init.arch == memory::Arch::kMlp2)
    fn("global_init.w2", sw.global_init.w2, false, Role::kInitW2, 0);
  for (std::size_t i = 0; i < sw.local_inits.size(); ++i) {
    const std::string tag = "local_init." + std::to_string(i);
    fn(tag + ".w1", sw.local_inits[i].w1, true, Role::kInitW1, i + 1);
    if (sw.local_inits[i].arch == memory::Arch::kMlp2)
      fn(tag + ".w2", sw.local_inits[i].w2, true, Role::kInitW2, i + 1);
  }
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> n(0.0, stddev);
  for (double& x : m.data()) x = n(rng);
  return m;
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeError("slow weights: " + what + " is " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                     std::to_string(cols));
}

void require_fast_shape(const FastWeights& w, const ModelConfig& config, const std::string& what) {
  if (w.arch != config.arch) throw ShapeError("slow weights: " + what + " has the wrong arch");
  const std::size_t d = config.dim;
  if (config.arch == memory::Arch::kLinear) {
    require_shape(w.w1, d, d, what + ".w1");
  } else {
    if (w.activation != config.activation)
      throw ShapeError("slow weights: " + what + " has the wrong activation");
    require_shape(w.w1, config.hidden_width(), d, what + ".w1");
    require_shape(w.w2, d, config.hidden_width(), what + ".w2");
  }
}

void check_tokens(std::span<const std::size_t> tokens, std::size_t vocab) {
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= vocab)
      throw ConfigError("token " + std::to_string(tokens[t]) + " at position " +
                        std::to_string(t) + " is outside the vocabulary of " +
                        std::to_string(vocab));
  }
}

FastWeights initial_fast_weights(const ModelConfig& config, std::mt19937_64& rng) {
  const std::size_t d = config.dim;
  if (config.arch == memory::Arch::kLinear)
    return FastWeights::zeros(memory::Arch::kLinear, d, 0);
  return FastWeights::random(memory::Arch::kMlp2, d, config.hidden_width(), config.activation,
                             0.5, rng);
}

// ---------------------------------------------------------------------------
// Tape path.

struct FastVars {
  ad::Var w1;
  ad::Var w2;
};

class TapeBuilder {
 public:
  TapeBuilder(ad::Tape& tape, const ModelConfig& config) : tape_(tape), cfg_(config) {}

  ad::Var retrieve(ad::Var x, const FastVars& w) {
    if (cfg_.arch == memory::Arch::kLinear) return tape_.matmul_nt(x, w.w1);
    return tape_.matmul_nt(tape_.activation(tape_.matmul_nt(x, w.w1), cfg_.activation), w.w2);
  }

  // Chunk-start state plus eta-weighted inner gradients of the chunk.
  struct ChunkGrads {
    ad::Var err_eta;    // c x d, rows eta_t (f(W, k_t) - v_t)
    ad::Var delta_eta;  // mlp2: c x h
    ad::Var hidden;     // mlp2: c x h, act(W1 k_t)
  };

  ChunkGrads chunk_grads(ad::Var k, ad::Var v, ad::Var eta, const FastVars& w) {
    ChunkGrads g;
    if (cfg_.arch == memory::Arch::kLinear) {
      g.err_eta = tape_.scale_rows(tape_.sub(tape_.matmul_nt(k, w.w1), v), eta);
      return g;
    }
    const ad::Var z = tape_.matmul_nt(k, w.w1);
    g.hidden = tape_.activation(z, cfg_.activation);
    const ad::Var err = tape_.sub(tape_.matmul_nt(g.hidden, w.w2), v);
    const ad::Var delta =
        tape_.mul(tape_.matmul(err, w.w2), tape_.activation_derivative(z, cfg_.activation));
    g.err_eta = tape_.scale_rows(err, eta);
    g.delta_eta = tape_.scale_rows(delta, eta);
    return g;
  }

  FastVars apply(const FastVars& w, const ChunkGrads& g, ad::Var k) {
    if (cfg_.arch == memory::Arch::kLinear) return {tape_.sub(w.w1, tape_.matmul_tn(g.err_eta, k)), {}};
    return {tape_.sub(w.w1, tape_.matmul_tn(g.delta_eta, k)),
            tape_.sub(w.w2, tape_.matmul_tn(g.err_eta, g.hidden))};
  }

  // Per-token retrieval f(W_t, p_t) inside one chunk, where W_t is the
  // chunk-start state minus the causal prefix of the chunk's updates.
  ad::Var retrieve_per_token(ad::Var p, ad::Var k, const FastVars& w, const ChunkGrads& g) {
    const ad::Var pk = tape_.causal_mask(tape_.matmul_nt(p, k));
    if (cfg_.arch == memory::Arch::kLinear)
      return tape_.sub(tape_.matmul_nt(p, w.w1), tape_.matmul(pk, g.err_eta));
    const ad::Var zq = tape_.sub(tape_.matmul_nt(p, w.w1), tape_.matmul(pk, g.delta_eta));
    const ad::Var aq = tape_.activation(zq, cfg_.activation);
    const ad::Var aa = tape_.causal_mask(tape_.matmul_nt(aq, g.hidden));
    return tape_.sub(tape_.matmul_nt(aq, w.w2), tape_.matmul(aa, g.err_eta));
  }

  ad::Var global_branch(ad::Var q, ad::Var k, ad::Var v, ad::Var eta, FastVars w,
                        std::size_t length) {
    std::vector<ad::Var> outs;
    const std::size_t c_g = cfg_.global_chunk;
    for (std::size_t b = 0; b < length; b += c_g) {
      const std::size_t c = std::min(c_g, length - b);
      outs.push_back(retrieve(tape_.rows(q, b, c), w));
      if (b + c < length) {
        const ad::Var kc = tape_.rows(k, b, c);
        const ChunkGrads g = chunk_grads(kc, tape_.rows(v, b, c), tape_.rows(eta, b, c), w);
        w = apply(w, g, kc);
      }
    }
    return tape_.concat_rows(outs);
  }

  ad::Var local_branch(ad::Var q, ad::Var k, ad::Var v, ad::Var eta, const FastVars& init,
                       const LocalConfig& local, std::size_t length) {
    std::vector<ad::Var> outs;
    for (std::size_t sb = 0; sb < length; sb += local.shard) {
      const std::size_t se = std::min(length, sb + local.shard);
      FastVars w = init;
      ad::Var m;  // running key sum carried across chunks of the shard
      for (std::size_t b = sb; b < se; b += local.chunk) {
        const std::size_t c = std::min(local.chunk, se - b);
        const bool more = b + c < se;
        const ad::Var qc = tape_.rows(q, b, c);
        const ad::Var kc = tape_.rows(k, b, c);
        ad::Var p = qc;
        if (cfg_.projection != ProjectionMode::kNone) {
          const ad::Var kp = cfg_.normalize_qk ? kc : tape_.normalize_rows(kc, 0.0);
          p = tape_.matmul(tape_.causal_mask(tape_.matmul_nt(qc, kp)), kp);
          if (m.valid()) p = tape_.add(tape_.matmul_nt(qc, m), p);
          if (more && cfg_.projection == ProjectionMode::kShardAccumulate) {
            const ad::Var term = tape_.matmul_tn(kp, kp);
            m = m.valid() ? tape_.add(m, term) : term;
          }
        }
        const ChunkGrads g = chunk_grads(kc, tape_.rows(v, b, c), tape_.rows(eta, b, c), w);
        outs.push_back(retrieve_per_token(p, kc, w, g));
        if (more) w = apply(w, g, kc);
      }
    }
    return tape_.concat_rows(outs);
  }

  ad::Var eta_stream(ad::Var x, ad::Var w, ad::Var b) {
    const ad::Var sp = tape_.softplus(tape_.add_scalar(tape_.matmul_nt(x, w), b));
    if (cfg_.eta_cap <= 0.0) return sp;
    return tape_.scale(tape_.tanh(tape_.scale(sp, 1.0 / cfg_.eta_cap)), cfg_.eta_cap);
  }

 private:
  ad::Tape& tape_;
  const ModelConfig& cfg_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Configuration.

void ModelConfig::validate() const {
  if (vocab < 2) throw ConfigError("model: vocab must be >= 2");
  if (dim == 0) throw ConfigError("model: dim must be >= 1");
  if (global_chunk == 0) throw ConfigError("model: global chunk size must be >= 1");
  for (std::size_t i = 0; i < locals.size(); ++i) {
    const auto& l = locals[i];
    const std::string id = "model: local " + std::to_string(i) + ": ";
    if (l.chunk == 0) throw ConfigError(id + "chunk size must be >= 1");
    if (l.shard < l.chunk || l.shard % l.chunk != 0)
      throw ConfigError(id + "chunk size " + std::to_string(l.chunk) +
                        " must divide shard length " + std::to_string(l.shard));
  }
  if (!(eta_init > 0.0) || !std::isfinite(eta_init))
    throw ConfigError("model: eta_init must be positive");
  if (!std::isfinite(eta_cap)) throw ConfigError("model: eta_cap must be finite");
  if (!(init_scale > 0.0) || !std::isfinite(init_scale))
    throw ConfigError("model: init_scale must be positive");
}

std::size_t ModelConfig::hidden_width() const {
  return hidden == 0 ? memory::default_hidden(dim) : hidden;
}

ModelConfig with_local_chunks(const ModelConfig& config, std::span<const std::size_t> chunks) {
  if (chunks.size() != config.locals.size())
    throw ConfigError("one chunk size per local memory is required (" +
                      std::to_string(config.locals.size()) + " locals, " +
                      std::to_string(chunks.size()) + " sizes)");
  ModelConfig out = config;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (chunks[i] == 0) throw ConfigError("local chunk size must be >= 1");
    const std::size_t c = std::min(chunks[i], out.locals[i].shard);
    if (out.locals[i].shard % c != 0)
      throw ConfigError("local chunk size " + std::to_string(c) + " does not divide shard length " +
                        std::to_string(out.locals[i].shard));
    out.locals[i].chunk = c;
  }
  return out;
}

ModelConfig with_local_chunk(const ModelConfig& config, std::size_t chunk) {
  const std::vector<std::size_t> chunks(config.locals.size(), chunk);
  return with_local_chunks(config, chunks);
}

// ---------------------------------------------------------------------------
// Slow weights.

SlowWeights SlowWeights::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.dim;
  const double s = config.init_scale;
  const double proj = s / std::sqrt(static_cast<double>(d));
  SlowWeights sw;
  sw.embedding = gaussian(config.vocab, d, s, rng);
  sw.wq = gaussian(d, d, proj, rng);
  sw.wk = gaussian(d, d, proj, rng);
  sw.wv = gaussian(d, d, proj, rng);
  sw.wshift = config.key_shift ? gaussian(d, d, proj, rng) : Matrix(d, d);
  sw.readout = gaussian(config.vocab, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  for (std::size_t m = 0; m < config.module_count(); ++m) {
    sw.eta_w.emplace_back(1, d);
    sw.eta_b.emplace_back(1, 1, inverse_softplus(config.eta_init));
  }
  sw.global_init = initial_fast_weights(config, rng);
  for (std::size_t i = 0; i < config.locals.size(); ++i)
    sw.local_inits.push_back(initial_fast_weights(config, rng));
  return sw;
}

void SlowWeights::check(const ModelConfig& config) const {
  const std::size_t d = config.dim;
  require_shape(embedding, config.vocab, d, "embedding");
  require_shape(wq, d, d, "wq");
  require_shape(wk, d, d, "wk");
  require_shape(wv, d, d, "wv");
  require_shape(wshift, d, d, "wshift");
  require_shape(readout, config.vocab, d, "readout");
  if (eta_w.size() != config.module_count() || eta_b.size() != config.module_count())
    throw ShapeError("slow weights: one eta parameter set per memory module is required");
  for (std::size_t m = 0; m < eta_w.size(); ++m) {
    require_shape(eta_w[m], 1, d, "eta_w");
    require_shape(eta_b[m], 1, 1, "eta_b");
  }
  require_fast_shape(global_init, config, "global_init");
  if (local_inits.size() != config.locals.size())
    throw ShapeError("slow weights: one initial state per local memory is required");
  for (const auto& w : local_inits) require_fast_shape(w, config, "local_init");
  if (!finite()) throw DivergenceError("slow weights contain non-finite entries");
}

bool SlowWeights::finite() const {
  bool ok = true;
  visit_params(*this, [&](const std::string&, const Matrix& m, bool, Role, std::size_t) {
    ok = ok && all_finite(m.data());
  });
  return ok;
}

std::vector<ParamRef> parameters(SlowWeights& sw) {
  std::vector<ParamRef> out;
  visit_params(sw, [&](const std::string& name, Matrix& m, bool local, Role, std::size_t) {
    out.push_back({name, &m, local});
  });
  return out;
}

std::vector<ConstParamRef> parameters(const SlowWeights& sw) {
  std::vector<ConstParamRef> out;
  visit_params(sw, [&](const std::string& name, const Matrix& m, bool local, Role, std::size_t) {
    out.push_back({name, &m, local});
  });
  return out;
}

std::size_t parameter_count(const SlowWeights& sw) {
  std::size_t n = 0;
  for (const auto& p : parameters(sw)) n += p.value->size();
  return n;
}

std::vector<double> flatten(const SlowWeights& sw) {
  std::vector<double> flat;
  for (const auto& p : parameters(sw))
    flat.insert(flat.end(), p.value->data().begin(), p.value->data().end());
  return flat;
}

void assign(SlowWeights& sw, std::span<const double> flat) {
  if (flat.size() != parameter_count(sw)) throw ShapeError("assign: parameter count mismatch");
  std::size_t offset = 0;
  for (auto& p : parameters(sw)) {
    const auto src = flat.subspan(offset, p.value->size());
    std::copy(src.begin(), src.end(), p.value->data().begin());
    offset += p.value->size();
  }
}

// ---------------------------------------------------------------------------
// Value path.

double compute_eta(std::span<const double> w, double b, std::span<const double> x, double cap) {
  const double sp = softplus(dot(x, w) + b);
  if (cap <= 0.0) return sp;
  return cap * std::tanh(sp * (1.0 / cap));
}

hierarchy::HierarchyConfig hierarchy_config(const ModelConfig& config, const SlowWeights& sw) {
  hierarchy::HierarchyConfig h;
  h.dim = config.dim;
  h.global_chunk = config.global_chunk;
  h.global_enabled = config.global_enabled;
  h.global_init = sw.global_init;
  for (std::size_t i = 0; i < config.locals.size(); ++i)
    h.locals.push_back({config.locals[i].chunk, config.locals[i].shard, sw.local_inits.at(i),
                        config.projection});
  return h;
}

Streams project(const SlowWeights& sw, const ModelConfig& config,
                std::span<const std::size_t> tokens) {
  check_tokens(tokens, config.vocab);
  const std::size_t length = tokens.size();
  const std::size_t d = config.dim;
  Streams s;
  s.embedded = Matrix(length, d);
  s.batch.queries = Matrix(length, d);
  s.batch.keys = Matrix(length, d);
  s.batch.values = Matrix(length, d);
  s.batch.normalized = config.normalize_qk;
  s.rates.locals.resize(config.locals.size());

  auto put = [](Matrix& m, std::size_t t, const Vector& v) {
    std::copy(v.span().begin(), v.span().end(), m.row(t).begin());
  };
  for (std::size_t t = 0; t < length; ++t) {
    const auto x = sw.embedding.row(tokens[t]);
    put(s.embedded, t, Vector(x));
    Vector q = matvec(sw.wq, x);
    Vector k = matvec(sw.wk, x);
    if (config.key_shift && t > 0) k = add(k, matvec(sw.wshift, sw.embedding.row(tokens[t - 1])));
    if (config.normalize_qk) {
      q = normalized(q);
      k = normalized(k);
    }
    put(s.batch.queries, t, q);
    put(s.batch.keys, t, k);
    put(s.batch.values, t, matvec(sw.wv, x));
    s.rates.global.push_back(compute_eta(sw.eta_w[0].row(0), sw.eta_b[0](0, 0), x, config.eta_cap));
    for (std::size_t i = 0; i < config.locals.size(); ++i)
      s.rates.locals[i].push_back(
          compute_eta(sw.eta_w[i + 1].row(0), sw.eta_b[i + 1](0, 0), x, config.eta_cap));
  }
  s.batch.etas = s.rates.global;
  return s;
}

namespace {

Matrix readout(const SlowWeights& sw, const Matrix& embedded, std::span<const Vector> outputs) {
  const std::size_t length = embedded.rows();
  Matrix logits(length, sw.readout.rows());
  for (std::size_t t = 0; t < length; ++t) {
    const Vector h = add(outputs[t], embedded.row(t));
    const Vector z = matvec(sw.readout, h);
    std::copy(z.span().begin(), z.span().end(), logits.row(t).begin());
  }
  return logits;
}

}  // namespace

Matrix forward_sequence(const SlowWeights& sw, const ModelConfig& config,
                        std::span<const std::size_t> tokens) {
  config.validate();
  sw.check(config);
  const Streams s = project(sw, config, tokens);
  const auto result = hierarchy::run_hierarchy(hierarchy_config(config, sw), s.batch, &s.rates);
  return readout(sw, s.embedded, result.outputs);
}

std::vector<Matrix> forward_batch(const SlowWeights& sw, const ModelConfig& config,
                                  std::span<const tasks::Sequence> sequences,
                                  exec::ShardedExecutor& executor) {
  config.validate();
  sw.check(config);
  std::vector<Streams> streams;
  streams.reserve(sequences.size());
  for (const auto& seq : sequences) streams.push_back(project(sw, config, seq));
  std::vector<memory::SequenceBatch> batches;
  std::vector<const hierarchy::ModuleRates*> rates;
  for (auto& s : streams) {
    batches.push_back(std::move(s.batch));
    rates.push_back(&s.rates);
  }
  const auto results = executor.run_many(hierarchy_config(config, sw), batches, rates);
  std::vector<Matrix> logits;
  logits.reserve(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i)
    logits.push_back(readout(sw, streams[i].embedded, results[i].outputs));
  return logits;
}

double sequence_loss(const Matrix& logits, std::span<const std::size_t> tokens) {
  if (logits.rows() != tokens.size()) throw ShapeError("sequence_loss: one logit row per token");
  if (tokens.size() < 2) throw ShapeError("sequence_loss: need at least two tokens");
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    const auto z = logits.row(t);
    const std::size_t target = tokens[t + 1];
    if (target >= z.size()) throw ConfigError("sequence_loss: target outside the vocabulary");
    const double peak = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - peak);
    total += peak + std::log(sum) - z[target];
  }
  return total / static_cast<double>(tokens.size() - 1);
}

double loss_value(const SlowWeights& sw, const ModelConfig& config,
                  std::span<const std::size_t> tokens) {
  return sequence_loss(forward_sequence(sw, config, tokens), tokens);
}

// ---------------------------------------------------------------------------
// Tape path.

LossAndGradient loss_and_gradient(const SlowWeights& sw, const ModelConfig& config,
                                  std::span<const std::size_t> tokens) {
  config.validate();
  sw.check(config);
  check_tokens(tokens, config.vocab);
  const std::size_t length = tokens.size();
  if (length < 2) throw ShapeError("loss_and_gradient: need at least two tokens");

  ad::Tape tape;
  std::vector<ad::Var> leaves;
  ad::Var emb, wq, wk, wv, ws, ro;
  std::vector<ad::Var> eta_w(config.module_count()), eta_b(config.module_count());
  std::vector<FastVars> inits(config.module_count());
  visit_params(sw, [&](const std::string&, const Matrix& m, bool, Role role, std::size_t mod) {
    const ad::Var v = tape.leaf(m);
    leaves.push_back(v);
    switch (role) {
      case Role::kEmbedding: emb = v; break;
      case Role::kWq: wq = v; break;
      case Role::kWk: wk = v; break;
      case Role::kWv: wv = v; break;
      case Role::kWshift: ws = v; break;
      case Role::kReadout: ro = v; break;
      case Role::kEtaW: eta_w[mod] = v; break;
      case Role::kEtaB: eta_b[mod] = v; break;
      case Role::kInitW1: inits[mod].w1 = v; break;
      case Role::kInitW2: inits[mod].w2 = v; break;
    }
  });

  TapeBuilder b(tape, config);
  const ad::Var x = tape.gather_rows(emb, tokens);
  ad::Var q = tape.matmul_nt(x, wq);
  ad::Var k = tape.matmul_nt(x, wk);
  if (config.key_shift) k = tape.add(k, tape.matmul_nt(tape.shift_rows_down(x), ws));
  if (config.normalize_qk) {
    q = tape.normalize_rows(q, 0.0);
    k = tape.normalize_rows(k, 0.0);
  }
  const ad::Var v = tape.matmul_nt(x, wv);

  ad::Var o;
  if (config.global_enabled) {
    const ad::Var eta = b.eta_stream(x, eta_w[0], eta_b[0]);
    o = b.global_branch(q, k, v, eta, inits[0], length);
  }
  for (std::size_t i = 0; i < config.locals.size(); ++i) {
    const ad::Var eta = b.eta_stream(x, eta_w[i + 1], eta_b[i + 1]);
    const ad::Var l = b.local_branch(q, k, v, eta, inits[i + 1], config.locals[i], length);
    o = o.valid() ? tape.add(o, l) : l;
  }
  const ad::Var h = o.valid() ? tape.add(o, x) : x;
  const ad::Var logits = tape.matmul_nt(tape.rows(h, 0, length - 1), ro);
  const ad::Var loss = tape.softmax_cross_entropy(logits, tokens.subspan(1));

  const ad::Gradients grads = tape.backward(loss);
  LossAndGradient out;
  out.loss = tape.scalar(loss);
  for (const ad::Var leaf : leaves) {
    const Matrix& value = tape.value(leaf);
    out.grads.push_back(grads.has(leaf) ? grads[leaf] : Matrix(value.rows(), value.cols()));
  }
  return out;
}

LossAndGradient batch_loss_and_gradient(const SlowWeights& sw, const ModelConfig& config,
                                        std::span<const tasks::Sequence> sequences,
                                        exec::WorkerPool& pool) {
  if (sequences.empty()) throw ShapeError("batch_loss_and_gradient: empty batch");
  std::vector<LossAndGradient> parts(sequences.size());
  std::vector<std::exception_ptr> errors(sequences.size());
  pool.parallel_for(sequences.size(), [&](std::size_t i) {
    try {
      parts[i] = loss_and_gradient(sw, config, sequences[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  LossAndGradient out = std::move(parts[0]);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    out.loss += parts[i].loss;
    for (std::size_t g = 0; g < out.grads.size(); ++g) out.grads[g] += parts[i].grads[g];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  out.loss *= inv;
  for (auto& g : out.grads) g *= inv;
  return out;
}

// ---------------------------------------------------------------------------
// Training.

std::string_view to_string(Stage stage) { return stage == Stage::kStage1 ? "stage1" : "stage2"; }

Stage stage_from_string(std::string_view name) {
  if (name == "stage1") return Stage::kStage1;
  if (name == "stage2") return Stage::kStage2;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(TrainableSet set) {
  return set == TrainableSet::kLocalOnly ? "local_only" : "all";
}

TrainableSet trainable_set_from_string(std::string_view name) {
  if (name == "local_only") return TrainableSet::kLocalOnly;
  if (name == "all") return TrainableSet::kAll;
  throw ConfigError("unknown trainable set '" + std::string(name) + "'");
}

void TrainSchedule::validate(const ModelConfig& config) const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("schedule: learning rate must be finite and non-negative");
  if (batch_size == 0) throw ConfigError("schedule: batch size must be >= 1");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw ConfigError("schedule: weight decay must be finite and non-negative");
  if (!std::isfinite(grad_clip)) throw ConfigError("schedule: grad_clip must be finite");
  if (stage != Stage::kStage2) return;
  if (stage2_chunks.size() != config.locals.size())
    throw ConfigError("schedule: stage 2 needs one chunk size per local memory (" +
                      std::to_string(config.locals.size()) + " locals, " +
                      std::to_string(stage2_chunks.size()) + " sizes)");
  for (std::size_t i = 0; i < stage2_chunks.size(); ++i) {
    const std::size_t c = stage2_chunks[i];
    const auto& l = config.locals[i];
    if (c == 0 || c > l.chunk)
      throw ConfigError("schedule: stage-2 chunk size " + std::to_string(c) + " for local " +
                        std::to_string(i) + " must be in [1, " + std::to_string(l.chunk) + "]");
    if (l.shard % c != 0)
      throw ConfigError("schedule: stage-2 chunk size " + std::to_string(c) +
                        " must divide shard length " + std::to_string(l.shard));
  }
}

ModelConfig TrainSchedule::effective_config(const ModelConfig& config) const {
  if (stage == Stage::kStage1) return config;
  return with_local_chunks(config, stage2_chunks);
}

std::size_t TrainSchedule::stage2_default_steps(std::size_t stage1_steps) {
  return std::max<std::size_t>(1, (stage1_steps * 5 + 99) / 100);
}

TrainResult train(SlowWeights sw, const TrainSchedule& schedule, const tasks::TaskSpec& task,
                  const ModelConfig& config, std::size_t workers, const StepCallback& on_step) {
  config.validate();
  schedule.validate(config);
  task.validate();
  if (task.vocab > config.vocab)
    throw ConfigError("task vocabulary " + std::to_string(task.vocab) +
                      " exceeds model vocabulary " + std::to_string(config.vocab));
  TrainResult result;
  result.config = schedule.effective_config(config);
  sw.check(result.config);

  exec::WorkerPool pool(workers);
  const auto params = parameters(sw);
  std::vector<bool> trainable(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    trainable[i] = schedule.stage == Stage::kStage1 ||
                   schedule.trainable == TrainableSet::kAll || params[i].local;

  for (std::size_t step = 0; step < schedule.steps; ++step) {
    const auto batch = tasks::generate_batch(
        task, schedule.data_offset + step * schedule.batch_size, schedule.batch_size);
    const LossAndGradient lg = batch_loss_and_gradient(sw, result.config, batch, pool);
    if (!std::isfinite(lg.loss))
      throw DivergenceError("loss became non-finite at step " + std::to_string(step));
    result.losses.push_back(lg.loss);
    if (on_step) on_step(step, lg.loss);
    if (schedule.learning_rate == 0.0) continue;

    double norm2_sum = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (trainable[i]) norm2_sum += dot(lg.grads[i].data(), lg.grads[i].data());
    if (!std::isfinite(norm2_sum))
      throw DivergenceError("gradient became non-finite at step " + std::to_string(step));
    const double norm = std::sqrt(norm2_sum);
    const double clip = schedule.grad_clip > 0.0 && norm > schedule.grad_clip
                            ? schedule.grad_clip / norm
                            : 1.0;
    const double lr = schedule.learning_rate * clip;
    const double decay = 1.0 - schedule.learning_rate * schedule.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!trainable[i]) continue;
      auto w = params[i].value->data();
      const auto g = lg.grads[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = decay * w[j] - lr * g[j];
    }
    if (!sw.finite())
      throw DivergenceError("weights became non-finite at step " + std::to_string(step));
  }
  result.weights = std::move(sw);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation.

double evaluate_loss(const SlowWeights& sw, const ModelConfig& config,
                     const tasks::TaskSpec& task, std::size_t sequences, std::size_t workers) {
  if (sequences == 0) throw ConfigError("evaluate: need at least one sequence");
  const auto data = tasks::generate_batch(task, tasks::kEvalOffset, sequences);
  exec::ShardedExecutor executor(workers);
  const auto logits = forward_batch(sw, config, data, executor);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += sequence_loss(logits[i], data[i]);
  return total / static_cast<double>(data.size());
}

std::vector<EvalPoint> evaluate(const SlowWeights& sw, const ModelConfig& config,
                                const tasks::TaskSpec& task, std::span<const std::size_t> chunks,
                                std::size_t sequences, std::size_t workers) {
  std::vector<EvalPoint> out;
  for (std::size_t c : chunks) {
    const double loss = evaluate_loss(sw, with_local_chunk(config, c), task, sequences, workers);
    out.push_back({c, loss, std::exp(loss)});
  }
  return out;
}

}  // namespace tnt::model
