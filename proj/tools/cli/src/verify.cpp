// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <random>
#include <sstream>

#include "tnt/cli/checkpoint.hpp"
#include "tnt/cli/commands.hpp"
#include "tnt/cli/config.hpp"
#include "tnt/hierarchy.hpp"
#include "tnt/memory.hpp"
#include "tnt/model.hpp"
#include "tnt/parallel_exec.hpp"
#include "tnt/qk_projection.hpp"
#include "tnt/tape.hpp"

namespace tnt::cli {
namespace {

using memory::Arch;
using memory::FastWeights;
using memory::SequenceBatch;

class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{seed, salt};
    gen_.seed(seq);
  }

  double uniform(double lo = -1.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  std::size_t pick(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen_);
  }
  Matrix matrix(std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (double& x : m.data()) x = uniform(lo, hi);
    return m;
  }
  Vector vector(std::size_t d) {
    Vector v(d);
    for (double& x : v.span()) x = uniform();
    return v;
  }
  Vector unit(std::size_t d) { return normalized(vector(d)); }
  FastWeights weights(Arch arch, std::size_t d, double scale = 0.5) {
    return FastWeights::random(arch, d, memory::default_hidden(d), Activation::kTanh, scale, gen_);
  }
  // Random streams with per-token eta in (0, max_eta].
  SequenceBatch batch(std::size_t length, std::size_t d, bool unit_qk, double max_eta = 0.1) {
    SequenceBatch b = exec::synthetic_batch(length, d, unit_qk, max_eta, gen_);
    for (double& e : b.etas) e = uniform(max_eta * 1e-3, max_eta);
    return b;
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

template <class... Args>
std::string msg(Args&&... args) {
  std::ostringstream os;
  os.precision(6);
  (os << ... << args);
  return os.str();
}

bool same_states(const std::vector<FastWeights>& a, const std::vector<FastWeights>& b) {
  return a == b;
}

bool same_outputs(const std::vector<Vector>& a, const std::vector<Vector>& b) { return a == b; }

// ---------------------------------------------------------------------------
// numerics

std::string prefix_sum_fold(std::uint64_t seed) {
  Rng rng(seed, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Matrix> ms;
    const std::size_t n = rng.pick(1, 8);
    for (std::size_t i = 0; i < n; ++i) ms.push_back(rng.matrix(3, 4));
    const auto out = prefix_sum_matrices(ms);
    Matrix acc = ms[0];
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0) acc += ms[t];
      if (!(out[t] == acc)) return msg("trial ", trial, ": prefix ", t, " differs from fold");
    }
  }
  return {};
}

// One random 4-parameter graph: a chain of square ops ending in a scalar.
ad::Var random_graph(ad::Tape& tape, std::span<const ad::Var> p, std::span<const int> ops) {
  ad::Var x = p[0];
  for (int op : ops) {
    switch (op) {
      case 0: x = tape.matmul(x, p[1]); break;
      case 1: x = tape.mul(x, p[1]); break;
      case 2: x = tape.tanh(x); break;
      case 3: x = tape.softplus(x); break;
      case 4: x = tape.activation(x, Activation::kGelu); break;
      case 5: x = tape.scale_rows(x, p[2]); break;
      case 6: x = tape.add_scalar(x, p[3]); break;
      case 7: x = tape.normalize_rows(tape.add(x, p[0]), 1e-3); break;
      case 8: x = tape.causal_mask(tape.matmul_nt(x, p[1])); break;
      case 9: x = tape.matmul_tn(p[0], x); break;
      default: x = tape.sub(x, tape.activation_derivative(p[1], Activation::kTanh)); break;
    }
  }
  return tape.sum(x);
}

std::string tape_gradient(std::uint64_t seed) {
  Rng rng(seed, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<Matrix> params = {rng.matrix(3, 3), rng.matrix(3, 3), rng.matrix(3, 1),
                                        rng.matrix(1, 1)};
    std::vector<int> ops(rng.pick(2, 6));
    for (int& op : ops) op = static_cast<int>(rng.pick(0, 10));

    auto evaluate = [&](const std::vector<Matrix>& ps, std::vector<Matrix>* grads) {
      ad::Tape tape;
      std::vector<ad::Var> leaves;
      for (const auto& m : ps) leaves.push_back(tape.leaf(m));
      const ad::Var loss = random_graph(tape, leaves, ops);
      if (grads != nullptr) {
        const auto g = tape.backward(loss);
        for (std::size_t i = 0; i < leaves.size(); ++i)
          grads->push_back(g.has(leaves[i]) ? g[leaves[i]] : Matrix(ps[i].rows(), ps[i].cols()));
      }
      return tape.scalar(loss);
    };
    std::vector<Matrix> grads;
    evaluate(params, &grads);
    std::vector<double> flat, analytic;
    for (std::size_t i = 0; i < params.size(); ++i) {
      flat.insert(flat.end(), params[i].data().begin(), params[i].data().end());
      analytic.insert(analytic.end(), grads[i].data().begin(), grads[i].data().end());
    }
    const auto fd = finite_difference_grad(
        [&](std::span<const double> f) {
          std::vector<Matrix> ps = params;
          std::size_t off = 0;
          for (auto& m : ps)
            for (double& x : m.data()) x = f[off++];
          return evaluate(ps, nullptr);
        },
        flat, 1e-5);
    const double err = relative_error(analytic, fd);
    if (err > 1e-5) return msg("trial ", trial, ": relative error ", err);
  }
  return {};
}

std::string purity(std::uint64_t seed) {
  Rng rng(seed, 3);
  const Matrix a = rng.matrix(5, 7);
  const Matrix b = rng.matrix(7, 4);
  if (!(matmul(a, b) == matmul(a, b))) return "matmul differs between identical calls";
  const FastWeights w = rng.weights(Arch::kMlp2, 4);
  const SequenceBatch batch = rng.batch(16, 4, true);
  if (!same_states(memory::chunkwise_compress(w, batch, {4}),
                   memory::chunkwise_compress(w, batch, {4})))
    return "chunkwise_compress differs between identical calls";
  return {};
}

std::string tape_shared_nodes(std::uint64_t seed) {
  // y = tanh(x) feeds two consumers; each node must be visited once.
  Rng rng(seed, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = rng.matrix(2, 3);
    ad::Tape tape;
    const ad::Var xv = tape.leaf(x);
    const ad::Var y = tape.tanh(xv);
    const ad::Var loss = tape.sum(tape.add(tape.mul(y, y), y));
    const auto g = tape.backward(loss);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = std::tanh(x.data()[i]);
      const double expect = (2.0 * t + 1.0) * (1.0 - t * t);
      if (std::abs(g[xv].data()[i] - expect) > 1e-12)
        return msg("trial ", trial, ": shared node gradient ", g[xv].data()[i], " vs ", expect);
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// memory

std::string chunk1_equals_sequential(std::uint64_t seed) {
  Rng rng(seed, 10);
  for (int trial = 0; trial < 20; ++trial) {
    const Arch arch = trial % 2 == 0 ? Arch::kLinear : Arch::kMlp2;
    const std::size_t d = rng.pick(1, 6);
    const SequenceBatch b = rng.batch(rng.pick(1, 24), d, trial % 3 == 0);
    const FastWeights w0 = rng.weights(arch, d);
    if (!same_states(memory::chunkwise_compress(w0, b, {1}), memory::sequential_compress(w0, b)))
      return msg("trial ", trial, ": C=1 states differ from the sequential recurrence");
  }
  return {};
}

std::string single_frozen_chunk(std::uint64_t seed) {
  Rng rng(seed, 11);
  for (int trial = 0; trial < 10; ++trial) {
    const Arch arch = trial % 2 == 0 ? Arch::kLinear : Arch::kMlp2;
    const std::size_t d = rng.pick(2, 5);
    const std::size_t length = rng.pick(1, 12);
    const SequenceBatch b = rng.batch(length, d, false);
    const FastWeights w0 = rng.weights(arch, d);
    const auto states = memory::chunkwise_compress(w0, b, {length + rng.pick(0, 3)});
    FastWeights sum = w0;
    for (std::size_t t = 0; t < length; ++t) {
      FastWeights g = memory::inner_grad(w0, b.key(t), b.value(t));
      g.w1 *= b.etas[t];
      g.w2 *= b.etas[t];
      if (t == 0) {
        sum = g;
      } else {
        sum.w1 += g.w1;
        sum.w2 += g.w2;
      }
      FastWeights expect = w0;
      expect.w1 -= sum.w1;
      expect.w2 -= sum.w2;
      if (!(states[t] == expect))
        return msg("trial ", trial, " token ", t, ": deviation ",
                   max_abs_diff(states[t].flatten(), expect.flatten()));
    }
  }
  return {};
}

std::string inner_grad_fd(std::uint64_t seed) {
  Rng rng(seed, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const Arch arch = trial % 2 == 0 ? Arch::kLinear : Arch::kMlp2;
    const std::size_t d = rng.pick(2, 5);
    FastWeights w = rng.weights(arch, d, 1.0);
    const Vector k = rng.vector(d);
    const Vector v = rng.vector(d);
    const auto analytic = memory::inner_grad(w, k, v).flatten();
    const auto fd = finite_difference_grad(
        [&](std::span<const double> p) {
          FastWeights x = w;
          x.assign(p);
          return memory::inner_loss(x, k, v);
        },
        w.flatten(), 1e-5);
    const double err = relative_error(analytic, fd);
    if (err > 1e-5)
      return msg("trial ", trial, " (", memory::to_string(arch), "): relative error ", err);
  }
  return {};
}

std::string monotone_descent(std::uint64_t seed) {
  Rng rng(seed, 13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = rng.pick(2, 6);
    const FastWeights w = FastWeights::linear(rng.matrix(d, d));
    const Vector k = rng.vector(d);
    const Vector v = rng.vector(d);
    SequenceBatch b{Matrix(1, d), Matrix(1, d), Matrix(1, d), {1e-3}, false};
    std::copy(k.span().begin(), k.span().end(), b.keys.row(0).begin());
    std::copy(v.span().begin(), v.span().end(), b.values.row(0).begin());
    const FastWeights after = memory::sequential_compress(w, b).front();
    const double before_loss = memory::inner_loss(w, k, v);
    const double after_loss = memory::inner_loss(after, k, v);
    if (after_loss > before_loss)
      return msg("trial ", trial, ": loss rose from ", before_loss, " to ", after_loss);
  }
  return {};
}

std::string finite_states(std::uint64_t seed) {
  Rng rng(seed, 14);
  for (Arch arch : {Arch::kLinear, Arch::kMlp2}) {
    const SequenceBatch b = rng.batch(512, 8, false, 0.1);
    for (std::size_t c : {1, 8, 64}) {
      for (const auto& s : memory::chunkwise_compress(rng.weights(arch, 8), b, {c}))
        if (!s.finite()) return msg(memory::to_string(arch), " C=", c, ": non-finite state");
    }
  }
  return {};
}

std::string batch_validation(std::uint64_t seed) {
  Rng rng(seed, 15);
  SequenceBatch good = rng.batch(6, 3, true);
  good.validate();
  auto rejects = [](SequenceBatch b) {
    try {
      b.validate();
    } catch (const std::invalid_argument&) {
      return true;
    }
    return false;
  };
  SequenceBatch bad = good;
  bad.etas[2] = -0.1;
  if (!rejects(bad)) return "negative eta accepted";
  bad = good;
  bad.etas.pop_back();
  if (!rejects(bad)) return "eta stream of the wrong length accepted";
  bad = good;
  bad.keys(1, 0) += 0.5;
  if (!rejects(bad)) return "non-unit key accepted under the normalized flag";
  bad = good;
  bad.values = Matrix(5, 3);
  if (!rejects(bad)) return "value stream of the wrong length accepted";
  return {};
}

// ---------------------------------------------------------------------------
// hierarchy

hierarchy::HierarchyConfig random_hierarchy(Rng& rng, std::size_t d, Arch arch) {
  hierarchy::HierarchyConfig h;
  h.dim = d;
  h.global_chunk = std::size_t{1} << rng.pick(0, 4);
  h.global_init = rng.weights(arch, d);
  const std::size_t n = rng.pick(1, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t chunk = std::size_t{1} << rng.pick(0, 2);
    const std::size_t shard = chunk * rng.pick(1, 4);
    h.locals.push_back({chunk, shard, rng.weights(arch, d),
                        static_cast<hierarchy::ProjectionMode>(rng.pick(0, 2))});
  }
  return h;
}

std::string reset_to_init(std::uint64_t seed) {
  Rng rng(seed, 20);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 4;
    const auto cfg = random_hierarchy(rng, d, trial % 2 == 0 ? Arch::kLinear : Arch::kMlp2);
    const SequenceBatch b = rng.batch(rng.pick(1, 40), d, true);
    const auto result = hierarchy::run_hierarchy(cfg, b);
    for (std::size_t i = 0; i < cfg.locals.size(); ++i) {
      const auto& spec = cfg.locals[i];
      for (const auto& entry : result.shard_entry_states[i])
        if (!(entry == spec.init)) return msg("trial ", trial, ": shard entry differs from W_init");
      const auto states = hierarchy::local_compress_with_reset(spec, b);
      for (std::size_t start = 0; start < b.length(); start += spec.shard) {
        SequenceBatch one{Matrix(1, d), Matrix(1, d), Matrix(1, d), {b.etas[start]}, b.normalized};
        std::copy(b.key(start).begin(), b.key(start).end(), one.keys.row(0).begin());
        std::copy(b.value(start).begin(), b.value(start).end(), one.values.row(0).begin());
        if (!(states[start] == memory::sequential_compress(spec.init, one).front()))
          return msg("trial ", trial, ": token ", start, " did not start from W_init");
      }
    }
  }
  return {};
}

std::string shard_order(std::uint64_t seed) {
  Rng rng(seed, 21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 3;
    const auto cfg = random_hierarchy(rng, d, Arch::kLinear);
    const SequenceBatch b = rng.batch(rng.pick(4, 40), d, true);
    for (const auto& spec : cfg.locals) {
      Matrix forward(b.length(), d), backward(b.length(), d);
      const std::size_t shards = hierarchy::shard_count(b.length(), spec.shard);
      for (std::size_t m = 0; m < shards; ++m)
        hierarchy::run_local_shard(spec, b, b.etas, m * spec.shard,
                                   std::min(b.length(), (m + 1) * spec.shard), forward);
      for (std::size_t m = shards; m-- > 0;)
        hierarchy::run_local_shard(spec, b, b.etas, m * spec.shard,
                                   std::min(b.length(), (m + 1) * spec.shard), backward);
      if (!(forward == backward)) return msg("trial ", trial, ": shard order changed outputs");
    }
  }
  return {};
}

std::string additivity(std::uint64_t seed) {
  Rng rng(seed, 22);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 4;
    const auto cfg = random_hierarchy(rng, d, trial % 2 == 0 ? Arch::kLinear : Arch::kMlp2);
    const SequenceBatch b = rng.batch(rng.pick(1, 32), d, true);
    const auto combined = hierarchy::run_hierarchy(cfg, b).outputs;

    std::vector<Vector> sum(b.length(), Vector(d));
    const auto bounds = hierarchy::global_compress(cfg.global_init, b, cfg.global_chunk);
    for (std::size_t t = 0; t < b.length(); ++t)
      sum[t] = memory::forward(bounds[t / cfg.global_chunk], b.query(t));
    for (const auto& spec : cfg.locals) {
      const auto states = hierarchy::local_compress_with_reset(spec, b);
      const auto proj = hierarchy::local_projection_states(spec, b);
      for (std::size_t t = 0; t < b.length(); ++t) {
        const Vector p = proj.empty() ? Vector(b.query(t)) : qk::project_query(proj[t], b.query(t));
        sum[t] = add(sum[t], memory::forward(states[t], p));
      }
    }
    if (!same_outputs(combined, sum)) return msg("trial ", trial, ": sum of branches differs");
  }
  return {};
}

std::string global_piecewise_constant(std::uint64_t seed) {
  Rng rng(seed, 23);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 4;
    const std::size_t c_g = 8;
    SequenceBatch b = rng.batch(32, d, true);
    const std::size_t chunk = rng.pick(0, 3);
    const std::size_t t1 = chunk * c_g + rng.pick(0, 3);
    const std::size_t t2 = chunk * c_g + rng.pick(4, 7);
    std::copy(b.query(t1).begin(), b.query(t1).end(), b.queries.row(t2).begin());
    Matrix out(b.length(), d);
    hierarchy::run_global_branch(rng.weights(Arch::kMlp2, d), b, b.etas, c_g, out);
    if (!std::equal(out.row(t1).begin(), out.row(t1).end(), out.row(t2).begin()))
      return msg("trial ", trial, ": equal queries in one global chunk gave different outputs");
  }
  return {};
}

std::string reduces_to_chunkwise(std::uint64_t seed) {
  Rng rng(seed, 24);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 4;
    const std::size_t c = std::size_t{1} << rng.pick(0, 3);
    const SequenceBatch b = rng.batch(c * rng.pick(1, 5), d, trial % 2 == 0);
    hierarchy::HierarchyConfig cfg;
    cfg.dim = d;
    cfg.global_chunk = c;
    cfg.global_enabled = false;
    cfg.global_init = FastWeights::zeros(Arch::kLinear, d, 0);
    const FastWeights init = rng.weights(trial % 2 == 0 ? Arch::kLinear : Arch::kMlp2, d);
    cfg.locals.push_back({c, b.length(), init, hierarchy::ProjectionMode::kNone});
    const auto expect =
        memory::chunkwise_retrieve(memory::chunkwise_compress(init, b, {c}), b);
    if (!same_outputs(hierarchy::run_hierarchy(cfg, b).outputs, expect))
      return msg("trial ", trial, ": hierarchy differs from plain chunkwise retrieval");
  }
  return {};
}

std::string config_validation(std::uint64_t seed) {
  Rng rng(seed, 25);
  auto cfg = random_hierarchy(rng, 3, Arch::kLinear);
  cfg.validate();
  auto rejects = [](const hierarchy::HierarchyConfig& c) {
    try {
      c.validate();
    } catch (const std::invalid_argument&) {
      return true;
    }
    return false;
  };
  auto bad = cfg;
  bad.global_chunk = 0;
  if (!rejects(bad)) return "C_G = 0 accepted";
  bad = cfg;
  bad.locals.front().chunk = 0;
  if (!rejects(bad)) return "C_L = 0 accepted";
  bad = cfg;
  bad.locals.front().chunk = 4;
  bad.locals.front().shard = 6;
  if (!rejects(bad)) return "C_L not dividing S_L accepted";
  bad = cfg;
  bad.locals.front().chunk = 8;
  bad.locals.front().shard = 4;
  if (!rejects(bad)) return "S_L < C_L accepted";
  bad = cfg;
  bad.locals.front().init = FastWeights::zeros(Arch::kLinear, 4, 0);
  if (!rejects(bad)) return "W_init of the wrong dimension accepted";
  bad = cfg;
  bad.locals.clear();
  if (rejects(bad)) return "N = 0 rejected";
  return {};
}

// ---------------------------------------------------------------------------
// qk_projection

std::string psd_symmetric(std::uint64_t seed) {
  Rng rng(seed, 30);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = rng.pick(2, 6);
    auto s = qk::ProjectionState::empty(d);
    for (int i = 0; i < 20; ++i) qk::absorb_key_in_place(s, rng.vector(d), false);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (std::abs(s.m(i, j) - s.m(j, i)) > 1e-9) return msg("trial ", trial, ": not symmetric");
    for (int probe = 0; probe < 50; ++probe) {
      const Vector x = rng.vector(d);
      if (dot(x, matvec(s.m, x)) < -1e-9) return msg("trial ", trial, ": negative quadratic form");
    }
  }
  return {};
}

std::string trace_counts_tokens(std::uint64_t seed) {
  Rng rng(seed, 31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = rng.pick(1, 8);
    auto s = qk::ProjectionState::empty(d);
    const std::size_t n = rng.pick(1, 50);
    for (std::size_t i = 0; i < n; ++i) qk::absorb_key_in_place(s, rng.unit(d), true);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += s.m(i, i);
    if (std::abs(trace - static_cast<double>(s.tokens_absorbed)) > 1e-9 || s.tokens_absorbed != n)
      return msg("trial ", trial, ": trace ", trace, " vs ", n, " tokens");
  }
  return {};
}

std::string running_sum_explicit(std::uint64_t seed) {
  Rng rng(seed, 32);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = rng.pick(1, 6);
    const bool unit = trial % 2 == 0;
    std::vector<Vector> keys;
    auto s = qk::ProjectionState::empty(d);
    for (std::size_t i = 0; i < rng.pick(1, 30); ++i) {
      keys.push_back(unit ? rng.unit(d) : rng.vector(d));
      qk::absorb_key_in_place(s, keys.back(), unit);
    }
    Matrix explicit_sum(d, d);
    for (const auto& k : keys) {
      Matrix term = outer(k, k);
      if (!unit) term *= 1.0 / dot(k, k);
      explicit_sum += term;
    }
    const double err = max_abs_diff(s.m.data(), explicit_sum.data());
    if (err > 1e-9) return msg("trial ", trial, ": deviation ", err);
  }
  return {};
}

std::string scan_sequential(std::uint64_t seed) {
  Rng rng(seed, 33);
  const std::pair<std::size_t, std::size_t> shapes[] = {{1, 4}, {2, 4}, {4, 8}, {8, 32}};
  for (int trial = 0; trial < 20; ++trial) {
    const auto [c, s] = shapes[trial % 4];
    const std::size_t d = rng.pick(1, 5);
    const bool unit = trial % 2 == 0;
    const SequenceBatch b = rng.batch(rng.pick(1, 70), d, unit);
    const auto scan = qk::chunkwise_projection_scan(b.keys, c, s, unit);
    auto state = qk::ProjectionState::empty(d);
    for (std::size_t t = 0; t < b.length(); ++t) {
      if (t % s == 0) state = qk::reset(state);
      qk::absorb_key_in_place(state, b.key(t), unit);
      if (!(scan[t] == state)) return msg("C=", c, " S=", s, ": token ", t, " differs");
    }
  }
  return {};
}

std::string normalized_consistency(std::uint64_t seed) {
  Rng rng(seed, 34);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = rng.pick(1, 6);
    auto general = qk::ProjectionState::empty(d);
    auto simple = qk::ProjectionState::empty(d);
    for (int i = 0; i < 20; ++i) {
      const Vector k = rng.unit(d);
      qk::absorb_key_in_place(general, k, false);
      qk::absorb_key_in_place(simple, k, true);
    }
    const double err = max_abs_diff(general.m.data(), simple.m.data());
    if (err > 1e-12) return msg("trial ", trial, ": modes differ by ", err);
  }
  return {};
}

std::string orthogonal_query(std::uint64_t seed) {
  Rng rng(seed, 35);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 6;
    auto s = qk::ProjectionState::empty(d);
    for (int i = 0; i < 10; ++i) {
      Vector k(d);
      for (std::size_t j = 0; j < 3; ++j) k[j] = rng.uniform();
      qk::absorb_key_in_place(s, k, false);
    }
    Vector q(d);
    for (std::size_t j = 3; j < d; ++j) q[j] = rng.uniform();
    if (max_abs(qk::project_query(s, q).span()) > 1e-12)
      return msg("trial ", trial, ": orthogonal query not annihilated");
  }
  return {};
}

std::string constant_state_size(std::uint64_t seed) {
  Rng rng(seed, 36);
  const std::size_t d = 5;
  auto s = qk::ProjectionState::empty(d);
  for (int i = 0; i < 2000; ++i) qk::absorb_key_in_place(s, rng.unit(d), true);
  if (s.m.rows() != d || s.m.cols() != d || s.m.size() != d * d)
    return "projection state grew with the number of tokens";
  return {};
}

// ---------------------------------------------------------------------------
// parallel_exec

std::string sharded_determinism(std::uint64_t seed) {
  Rng rng(seed, 40);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t d = 4;
    const auto cfg = random_hierarchy(rng, d, trial % 2 == 0 ? Arch::kLinear : Arch::kMlp2);
    const SequenceBatch b = rng.batch(rng.pick(1, 48), d, true);
    const auto serial = hierarchy::run_hierarchy(cfg, b);
    for (std::size_t workers : {1, 2, 4, 8}) {
      const auto par = exec::run_sharded(cfg, b, workers);
      if (!same_outputs(par.outputs, serial.outputs) ||
          !(par.final_state.global == serial.final_state.global) ||
          par.shard_entry_states != serial.shard_entry_states)
        return msg("trial ", trial, ": ", workers, " workers differ from the serial run");
      for (std::size_t i = 0; i < cfg.locals.size(); ++i)
        if (!(par.final_state.locals[i].weights == serial.final_state.locals[i].weights) ||
            !(par.final_state.locals[i].projection == serial.final_state.locals[i].projection))
          return msg("trial ", trial, ": final local state differs with ", workers, " workers");
    }
  }
  return {};
}

std::string plan_complete(std::uint64_t seed) {
  Rng rng(seed, 41);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cfg = random_hierarchy(rng, 2, Arch::kLinear);
    const std::vector<std::size_t> lengths = {rng.pick(0, 40), rng.pick(1, 40)};
    for (std::size_t workers = 1; workers <= 8; ++workers) {
      const auto plan = exec::make_plan(cfg, lengths, workers);
      plan.validate();
      std::size_t expected = 0;
      for (std::size_t len : lengths) {
        expected += cfg.global_enabled ? 1 : 0;
        for (const auto& l : cfg.locals) expected += hierarchy::shard_count(len, l.shard);
      }
      std::size_t queued = 0;
      for (const auto& q : plan.queues()) queued += q.size();
      if (plan.tasks.size() != expected || queued != expected)
        return msg("trial ", trial, ": plan covers ", queued, " of ", expected, " tasks");
    }
  }
  return {};
}

std::string inputs_immutable(std::uint64_t seed) {
  Rng rng(seed, 42);
  const auto cfg = random_hierarchy(rng, 4, Arch::kMlp2);
  const SequenceBatch b = rng.batch(40, 4, true);
  const SequenceBatch copy = b;
  const auto before = cfg.locals.front().init;
  exec::run_sharded(cfg, b, 4);
  if (!(b.queries == copy.queries) || !(b.keys == copy.keys) || !(b.values == copy.values) ||
      b.etas != copy.etas || !(cfg.locals.front().init == before))
    return "sharded run modified its inputs";
  return {};
}

std::string linear_scaling(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  hierarchy::HierarchyConfig h;
  h.dim = 8;
  h.global_chunk = 64;
  h.global_init = FastWeights::random(Arch::kLinear, 8, 0, Activation::kTanh, 0.5, rng);
  h.locals.push_back({8, 64, FastWeights::random(Arch::kLinear, 8, 0, Activation::kTanh, 0.5, rng),
                      hierarchy::ProjectionMode::kShardAccumulate});
  exec::BenchConfig tnt{"tnt", h, 1, false};
  exec::BenchConfig attention{"attention", {}, 1, true};
  attention.hierarchy.dim = 8;
  const std::vector<exec::BenchConfig> configs = {tnt, attention};
  const std::vector<std::size_t> lengths = {1024, 2048};
  exec::BenchOptions options;
  options.warmup = 0;
  options.repetitions = 1;
  options.seed = seed;
  // Paired rounds: each round times both lengths back to back; median ratio.
  exec::benchmark(configs, lengths, 8192, options);
  std::vector<double> tnt_ratios, attn_ratios;
  for (int round = 0; round < 9; ++round) {
    const auto records = exec::benchmark(configs, lengths, 8192, options);
    for (const auto& r : records)
      if (!r.valid()) return "benchmark produced a non-positive record";
    tnt_ratios.push_back(records[1].wall_time_s / records[0].wall_time_s);
    attn_ratios.push_back(records[3].wall_time_s / records[2].wall_time_s);
  }
  std::sort(tnt_ratios.begin(), tnt_ratios.end());
  std::sort(attn_ratios.begin(), attn_ratios.end());
  const double tnt_ratio = tnt_ratios[tnt_ratios.size() / 2];
  const double attn_ratio = attn_ratios[attn_ratios.size() / 2];
  if (tnt_ratio > 1.5 || attn_ratio < 1.8)
    return msg("doubling ratios: tnt ", tnt_ratio, " (<= 1.5), attention ", attn_ratio,
               " (>= 1.8)");
  return {};
}

// ---------------------------------------------------------------------------
// model

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.vocab = 8;
  c.dim = 4;
  c.global_chunk = 4;
  c.locals = {{2, 4}};
  c.eta_cap = 0.5;
  c.eta_init = 0.2;
  return c;
}

std::string model_gradient(std::uint64_t seed) {
  Rng rng(seed, 50);
  for (int trial = 0; trial < 3; ++trial) {
    model::ModelConfig c = tiny_model();
    c.arch = trial == 1 ? Arch::kMlp2 : Arch::kLinear;
    model::SlowWeights sw = model::SlowWeights::initialize(c, seed + trial);
    for (auto& x : sw.global_init.w1.data()) x = rng.uniform(-0.3, 0.3);
    for (auto& x : sw.local_inits[0].w1.data()) x = rng.uniform(-0.3, 0.3);
    tasks::Sequence tokens(8);
    for (auto& t : tokens) t = rng.pick(0, 7);
    const auto lg = model::loss_and_gradient(sw, c, tokens);
    const auto fd = finite_difference_grad(
        [&](std::span<const double> p) {
          model::SlowWeights x = sw;
          model::assign(x, p);
          return model::loss_value(x, c, tokens);
        },
        model::flatten(sw), 1e-5);
    const auto params = model::parameters(sw);
    std::size_t off = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t n = params[i].value->size();
      const double err =
          relative_error(lg.grads[i].data(), std::span<const double>(fd).subspan(off, n));
      if (err > 1e-4) return msg("trial ", trial, ": group ", params[i].name, " error ", err);
      off += n;
    }
  }
  return {};
}

std::string tape_matches_value(std::uint64_t seed) {
  Rng rng(seed, 51);
  for (int trial = 0; trial < 4; ++trial) {
    model::ModelConfig c = tiny_model();
    c.arch = trial % 2 == 0 ? Arch::kLinear : Arch::kMlp2;
    c.projection = static_cast<hierarchy::ProjectionMode>(trial % 3);
    const auto sw = model::SlowWeights::initialize(c, seed + trial);
    tasks::Sequence tokens(16);
    for (auto& t : tokens) t = rng.pick(0, 7);
    const double tape = model::loss_and_gradient(sw, c, tokens).loss;
    const double value = model::loss_value(sw, c, tokens);
    if (std::abs(tape - value) > 1e-10)
      return msg("trial ", trial, ": tape ", tape, " vs value ", value);
  }
  return {};
}

std::string stage2_freeze(std::uint64_t seed) {
  const model::ModelConfig c = tiny_model();
  const tasks::TaskSpec task{tasks::TaskKind::kAssociativeRecall, 8, 8, seed};
  model::TrainSchedule s1;
  s1.steps = 2;
  s1.batch_size = 2;
  const auto stage1 = model::train(model::SlowWeights::initialize(c, seed), s1, task, c);
  model::TrainSchedule s2 = s1;
  s2.stage = model::Stage::kStage2;
  s2.steps = 3;
  s2.stage2_chunks = {1};
  s2.trainable = model::TrainableSet::kLocalOnly;
  s2.weight_decay = 0.1;
  const auto stage2 = model::train(stage1.weights, s2, task, c);
  const auto before = model::parameters(stage1.weights);
  const auto after = model::parameters(stage2.weights);
  bool local_moved = false;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool same = *before[i].value == *after[i].value;
    if (!before[i].local && !same) return "non-local group " + before[i].name + " changed";
    local_moved = local_moved || (before[i].local && !same);
  }
  if (!local_moved) return "no local group changed during stage 2";
  return {};
}

std::string causality(std::uint64_t seed) {
  Rng rng(seed, 52);
  const model::ModelConfig c = tiny_model();
  const auto sw = model::SlowWeights::initialize(c, seed);
  tasks::Sequence tokens(8);
  for (auto& t : tokens) t = rng.pick(0, 7);
  const Matrix base = model::forward_sequence(sw, c, tokens);
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    for (std::size_t alt = 0; alt < c.vocab; ++alt) {
      if (alt == tokens[pos]) continue;
      tasks::Sequence changed = tokens;
      changed[pos] = alt;
      const Matrix out = model::forward_sequence(sw, c, changed);
      for (std::size_t t = 0; t < pos; ++t)
        if (!std::equal(out.row(t).begin(), out.row(t).end(), base.row(t).begin()))
          return msg("changing token ", pos, " altered logits at ", t);
    }
  }
  // Sampled at L = 128.
  tasks::Sequence long_tokens(128);
  for (auto& t : long_tokens) t = rng.pick(0, 7);
  const Matrix long_base = model::forward_sequence(sw, c, long_tokens);
  for (int sample = 0; sample < 8; ++sample) {
    const std::size_t pos = rng.pick(1, 127);
    tasks::Sequence changed = long_tokens;
    changed[pos] = (changed[pos] + rng.pick(1, 7)) % 8;
    const Matrix out = model::forward_sequence(sw, c, changed);
    for (std::size_t t = 0; t < pos; ++t)
      if (!std::equal(out.row(t).begin(), out.row(t).end(), long_base.row(t).begin()))
        return msg("L=128: changing token ", pos, " altered logits at ", t);
  }
  return {};
}

std::string schedule_validation(std::uint64_t) {
  const model::ModelConfig c = tiny_model();
  model::TrainSchedule s;
  s.stage = model::Stage::kStage2;
  s.stage2_chunks = {2};
  s.validate(c);
  s.stage2_chunks = {1};
  s.validate(c);
  for (const auto& bad : std::vector<std::vector<std::size_t>>{{4}, {0}, {}, {1, 1}}) {
    s.stage2_chunks = bad;
    try {
      s.validate(c);
      return msg("stage-2 chunk list of size ", bad.size(), " accepted");
    } catch (const ConfigError&) {
    }
  }
  if (model::TrainSchedule::stage2_default_steps(500) != 25 ||
      model::TrainSchedule::stage2_default_steps(1) != 1)
    return "stage-2 default budget is not 5% of stage 1";
  return {};
}

std::string task_determinism(std::uint64_t seed) {
  for (auto kind : {tasks::TaskKind::kCopy, tasks::TaskKind::kAssociativeRecall,
                    tasks::TaskKind::kNeedle}) {
    const tasks::TaskSpec spec{kind, 16, 64, seed};
    for (std::uint64_t i : {std::uint64_t{0}, std::uint64_t{7}, tasks::kEvalOffset}) {
      const auto a = tasks::generate(spec, i);
      if (a != tasks::generate(spec, i)) return msg(tasks::to_string(kind), ": not deterministic");
      if (a.size() != spec.length) return msg(tasks::to_string(kind), ": wrong length");
      for (auto t : a)
        if (t >= spec.vocab) return msg(tasks::to_string(kind), ": token outside the vocabulary");
    }
    if (tasks::generate(spec, 0) == tasks::generate(spec, tasks::kEvalOffset))
      return msg(tasks::to_string(kind), ": held-out sequence equals a training sequence");
  }
  return {};
}

std::string training_determinism(std::uint64_t seed) {
  const model::ModelConfig c = tiny_model();
  const tasks::TaskSpec task{tasks::TaskKind::kCopy, 8, 16, seed};
  model::TrainSchedule s;
  s.steps = 3;
  s.batch_size = 3;
  const auto a = model::train(model::SlowWeights::initialize(c, seed), s, task, c, 1);
  const auto b = model::train(model::SlowWeights::initialize(c, seed), s, task, c, 3);
  if (a.losses != b.losses || !(a.weights == b.weights)) return "identical seeds diverged";
  return {};
}

std::string eta_positive(std::uint64_t seed) {
  Rng rng(seed, 53);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = rng.pick(1, 6);
    const Vector w = rng.vector(d);
    const Vector x = rng.vector(d);
    const double b = rng.uniform(-5.0, 5.0);
    const double cap = trial % 4 == 0 ? 0.0 : rng.uniform(0.01, 1.0);
    const double eta = model::compute_eta(w, b, x, cap);
    double z = b;
    for (std::size_t i = 0; i < d; ++i) z += w[i] * x[i];
    const double sp = std::log1p(std::exp(z));
    const double expect = cap > 0.0 ? cap * std::tanh(sp / cap) : sp;
    if (!(eta > 0.0) || std::abs(eta - expect) > 1e-12)
      return msg("trial ", trial, ": eta ", eta, " expected ", expect);
  }
  return {};
}

// ---------------------------------------------------------------------------
// cli

std::string config_roundtrip(std::uint64_t) {
  RunConfig c;
  c.model.locals = {{4, 16}, {8, 16}};
  c.schedule.stage = model::Stage::kStage2;
  c.schedule.stage2_chunks = {1, 2};
  c.schedule.learning_rate = 0.123456789;
  const json j = to_json(c);
  const RunConfig back = run_config_from_json(json::parse(j.dump()));
  if (to_json(back) != j) return "config changed across a JSON round trip";
  return {};
}

std::string checkpoint_roundtrip(std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.config = tiny_model();
  ckpt.config.arch = Arch::kMlp2;
  ckpt.task = {tasks::TaskKind::kNeedle, 8, 16, 3};
  ckpt.weights = model::SlowWeights::initialize(ckpt.config, seed);
  const Checkpoint back = checkpoint_from_json(json::parse(checkpoint_to_json(ckpt).dump()));
  if (!(back.weights == ckpt.weights) || !(back.config == ckpt.config))
    return "checkpoint changed across a JSON round trip";
  return {};
}

std::string bench_csv_roundtrip(std::uint64_t) {
  std::vector<exec::BenchRecord> records = {
      {1024, 8192, "tnt", {256, 8}, 2, 0.125, 65536.0},
      {2048, 8192, "attention", {}, 1, 1.0 / 3.0, 24576.0}};
  std::ostringstream os;
  exec::write_bench_csv(os, records);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  if (line != exec::bench_csv_header()) return "bad header";
  for (const auto& r : records) {
    std::getline(is, line);
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(row, field, ',')) f.push_back(field);
    if (f.size() != 6 || std::stoul(f[0]) != r.seq_len || std::stoul(f[1]) != r.tokens_per_batch ||
        f[2] != r.config || std::stoul(f[3]) != r.workers ||
        std::stod(f[4]) != r.wall_time_s || std::stod(f[5]) != r.tokens_per_s)
      return "row '" + line + "' does not parse back";
  }
  return {};
}

std::string train_reproducible(std::uint64_t seed) {
  namespace fs = std::filesystem;
  const fs::path root =
      fs::temp_directory_path() / ("tnt-verify-" + std::to_string(seed) + "-" +
                                   std::to_string(std::random_device{}()));
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{root};

  RunConfig c;
  c.model = tiny_model();
  c.task = {tasks::TaskKind::kAssociativeRecall, 8, 16, seed};
  c.schedule.steps = 3;
  c.schedule.batch_size = 2;
  c.eval_sequences = 2;
  c.seed = seed;
  std::ostringstream log;
  auto read = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  c.output_dir = (root / "a").string();
  cmd_train(c, 1, log);
  c.output_dir = (root / "b").string();
  cmd_train(c, 2, log);
  for (const char* f : {"loss.csv", "checkpoint.json", "config.json"}) {
    if (f != std::string("config.json") && read(root / "a" / f) != read(root / "b" / f))
      return msg(f, " differs between identical runs");
    if (read(root / "a" / f).empty()) return msg(f, " missing");
  }
  const json summary = read_json_file(root / "a" / "summary.json");
  for (const char* key : {"final_loss", "eval_loss", "wall_time_s", "tokens_per_s"})
    if (!summary.contains(key)) return msg("summary.json lacks ", key);

  SweepOptions sweep;
  sweep.checkpoint = root / "a" / "checkpoint.json";
  sweep.chunks = {1, 2, 4};
  sweep.eval_sequences = 2;
  sweep.output_dir = root / "a";
  cmd_sweep(sweep, log);
  std::istringstream csv(read(root / "a" / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  if (line != "chunk_size,loss,perplexity") return "bad sweep header";
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    double loss = 0.0, ppl = 0.0;
    unsigned long chunk = 0;
    if (std::sscanf(line.c_str(), "%lu,%lf,%lf", &chunk, &loss, &ppl) != 3)
      return "unparseable sweep row '" + line + "'";
    if (std::abs(ppl - std::exp(loss)) > 1e-9 * ppl) return "perplexity != exp(loss)";
    ++rows;
  }
  if (rows != 3) return msg("sweep wrote ", rows, " rows for 3 chunk sizes");
  return {};
}

}  // namespace

std::vector<Property> invariant_suite(std::uint64_t seed) {
  auto bind = [seed](std::string (*fn)(std::uint64_t)) { return [fn, seed] { return fn(seed); }; };
  return {
      {"numerics.prefix_sum_fold", "prefix sums equal the left fold bit-exactly", bind(prefix_sum_fold)},
      {"numerics.tape_gradient", "tape gradients match central differences (rel 1e-5)", bind(tape_gradient)},
      {"numerics.purity", "identical inputs give identical outputs", bind(purity)},
      {"numerics.tape_shared_nodes", "backward visits a shared node once", bind(tape_shared_nodes)},
      {"memory.chunk1_equals_sequential", "chunkwise C=1 equals the sequential recurrence", bind(chunk1_equals_sequential)},
      {"memory.single_frozen_chunk", "C >= L takes every gradient at w0", bind(single_frozen_chunk)},
      {"memory.inner_grad_fd", "inner_grad matches central differences (rel 1e-5)", bind(inner_grad_fd)},
      {"memory.monotone_descent", "one small step never raises the inner loss", bind(monotone_descent)},
      {"memory.finite_states", "states stay finite for eta <= 0.1, |x| <= 1, L = 512", bind(finite_states)},
      {"memory.batch_validation", "malformed streams are rejected", bind(batch_validation)},
      {"hierarchy.reset_to_init", "every shard starts from W_init", bind(reset_to_init)},
      {"hierarchy.shard_order", "shard evaluation order does not change outputs", bind(shard_order)},
      {"hierarchy.additivity", "output equals the sum of isolated branches", bind(additivity)},
      {"hierarchy.global_piecewise_constant", "global branch is constant in state within a chunk", bind(global_piecewise_constant)},
      {"hierarchy.reduces_to_chunkwise", "one local, no global, no projection is plain chunkwise", bind(reduces_to_chunkwise)},
      {"hierarchy.config_validation", "C >= 1, S >= C, C | S and W_init shapes are enforced", bind(config_validation)},
      {"qk.psd_symmetric", "M is symmetric positive semidefinite", bind(psd_symmetric)},
      {"qk.trace_counts_tokens", "trace(M) equals the number of unit keys", bind(trace_counts_tokens)},
      {"qk.running_sum_explicit", "streaming state equals the explicit key sum", bind(running_sum_explicit)},
      {"qk.scan_sequential", "chunkwise scan equals the token recurrence bit-exactly", bind(scan_sequential)},
      {"qk.normalized_consistency", "general and unit-key modes agree on unit keys", bind(normalized_consistency)},
      {"qk.orthogonal_query", "queries orthogonal to all keys project to zero", bind(orthogonal_query)},
      {"qk.constant_state_size", "state stays d x d", bind(constant_state_size)},
      {"exec.determinism", "sharded runs equal the serial run for 1, 2, 4, 8 workers", bind(sharded_determinism)},
      {"exec.plan_complete", "every shard is scheduled exactly once", bind(plan_complete)},
      {"exec.inputs_immutable", "shard tasks never write their inputs", bind(inputs_immutable)},
      {"exec.linear_scaling", "doubling L at fixed tokens: tnt <= 1.5x, attention >= 1.8x", bind(linear_scaling)},
      {"model.gradient_check", "end-to-end tape gradients match central differences (rel 1e-4)", bind(model_gradient)},
      {"model.tape_matches_value", "tape loss equals the value-path loss", bind(tape_matches_value)},
      {"model.stage2_freeze", "stage 2 local_only leaves non-local groups untouched", bind(stage2_freeze)},
      {"model.causality", "logits at t ignore tokens after t", bind(causality)},
      {"model.determinism", "identical seeds give identical loss curves", bind(training_determinism)},
      {"model.eta_positive", "eta is positive and matches its closed form", bind(eta_positive)},
      {"model.schedule_validation", "stage-2 chunk sizes must satisfy 1 <= C_L' <= C_L", bind(schedule_validation)},
      {"model.task_determinism", "task sequences are a pure function of (seed, index)", bind(task_determinism)},
      {"cli.config_roundtrip", "run configs survive a JSON round trip", bind(config_roundtrip)},
      {"cli.checkpoint_roundtrip", "checkpoints survive a JSON round trip", bind(checkpoint_roundtrip)},
      {"cli.bench_csv_roundtrip", "benchmark CSV parses back losslessly", bind(bench_csv_roundtrip)},
      {"cli.train_reproducible", "same config and seed give identical artifacts; sweep rows satisfy ppl = exp(loss)", bind(train_reproducible)},
  };
}

std::vector<PropertyResult> run_suite(const std::vector<Property>& suite, std::ostream& out) {
  std::vector<PropertyResult> results;
  for (const auto& p : suite) {
    PropertyResult r{p.id, false, {}};
    try {
      r.detail = p.check();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    out << (r.passed ? "PASS " : "FAIL ") << p.id;
    if (!r.passed) out << ": " << r.detail;
    out << '\n';
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace tnt::cli
