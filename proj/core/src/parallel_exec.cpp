// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/parallel_exec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <string>
#include <tuple>

namespace tnt::exec {

WorkerPool::WorkerPool(std::size_t workers) : size_(workers) {
  if (workers == 0) throw ConfigError("worker count must be >= 1");
  if (workers == 1) return;
  threads_.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this, i] { worker_loop(i); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::worker_loop(std::size_t index) {
  std::uint64_t seen = 0;
  for (;;) {
    std::span<const std::vector<Job>> queues;
    {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      queues = queues_;
    }
    if (index < queues.size()) {
      for (const Job& job : queues[index]) job();
    }
    {
      std::lock_guard lock(mutex_);
      if (--pending_ == 0) done_.notify_one();
    }
  }
}

void WorkerPool::run(std::span<const std::vector<Job>> queues) {
  if (queues.size() > size_) throw ConfigError("WorkerPool::run: more queues than workers");
  if (threads_.empty()) {
    for (const auto& q : queues)
      for (const Job& job : q) job();
    return;
  }
  std::unique_lock lock(mutex_);
  queues_ = queues;
  pending_ = threads_.size();
  ++generation_;
  wake_.notify_all();
  done_.wait(lock, [&] { return pending_ == 0; });
  queues_ = {};
}

void WorkerPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::vector<std::vector<Job>> queues(std::min(size_, std::max<std::size_t>(n, 1)));
  for (std::size_t i = 0; i < n; ++i) queues[i % queues.size()].push_back([&fn, i] { fn(i); });
  run(queues);
}

std::vector<std::vector<std::size_t>> ExecPlan::queues() const {
  std::vector<std::vector<std::size_t>> out(workers);
  for (std::size_t i = 0; i < tasks.size(); ++i) out[worker_of[i]].push_back(i);
  return out;
}

void ExecPlan::validate() const {
  if (workers == 0) throw ConfigError("ExecPlan: worker count must be >= 1");
  if (worker_of.size() != tasks.size())
    throw ConfigError("ExecPlan: every task needs exactly one worker");
  for (std::size_t w : worker_of)
    if (w >= workers) throw ConfigError("ExecPlan: assignment to a nonexistent worker");
  for (std::size_t i = 1; i < tasks.size(); ++i) {
    const auto& a = tasks[i - 1];
    const auto& b = tasks[i];
    if (std::tie(a.sequence, a.module, a.shard) >= std::tie(b.sequence, b.module, b.shard))
      throw ConfigError("ExecPlan: tasks out of merge order or duplicated");
  }
}

ExecPlan make_plan(const HierarchyConfig& config, std::span<const std::size_t> lengths,
                   std::size_t workers) {
  if (workers == 0) throw ConfigError("worker count must be >= 1");
  ExecPlan plan;
  plan.workers = workers;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    const std::size_t length = lengths[s];
    if (config.global_enabled) plan.tasks.push_back({s, 0, 0, 0, length, length});
    for (std::size_t i = 0; i < config.locals.size(); ++i) {
      const std::size_t shard = config.locals[i].shard;
      for (std::size_t m = 0; m < hierarchy::shard_count(length, shard); ++m) {
        const std::size_t begin = m * shard;
        const std::size_t end = std::min(length, begin + shard);
        plan.tasks.push_back({s, i + 1, m, begin, end, end - begin});
      }
    }
  }

  std::vector<std::size_t> order(plan.tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return plan.tasks[a].cost > plan.tasks[b].cost;
  });
  std::vector<std::size_t> load(workers, 0);
  plan.worker_of.assign(plan.tasks.size(), 0);
  for (std::size_t idx : order) {
    const auto w = static_cast<std::size_t>(
        std::min_element(load.begin(), load.end()) - load.begin());
    plan.worker_of[idx] = w;
    load[w] += plan.tasks[idx].cost;
  }
  return plan;
}

ShardedExecutor::ShardedExecutor(std::size_t workers) : pool_(workers) {}

HierarchyResult ShardedExecutor::run(const HierarchyConfig& config, const SequenceBatch& batch,
                                     const ModuleRates* rates) {
  const ModuleRates* r[] = {rates};
  return std::move(run_many(config, std::span(&batch, 1), r).front());
}

std::vector<HierarchyResult> ShardedExecutor::run_many(
    const HierarchyConfig& config, std::span<const SequenceBatch> batches,
    std::span<const ModuleRates* const> rates) {
  config.validate();
  if (!rates.empty() && rates.size() != batches.size())
    throw ShapeError("run_sharded: one rate set per batch is required");
  std::vector<std::size_t> lengths;
  for (const auto& b : batches) {
    b.validate();
    if (b.length() > 0 && b.dim() != config.dim)
      throw ShapeError("run_sharded: batch dimension does not match config dimension");
    lengths.push_back(b.length());
  }
  const auto rate_of = [&](std::size_t s) { return rates.empty() ? nullptr : rates[s]; };
  // Resolve eta streams up front so lookup failures surface before any work.
  std::vector<std::vector<std::span<const double>>> etas(batches.size());
  for (std::size_t s = 0; s < batches.size(); ++s)
    for (std::size_t m = 0; m <= config.locals.size(); ++m)
      etas[s].push_back(config.global_enabled || m > 0
                            ? hierarchy::module_etas(batches[s], rate_of(s), m)
                            : std::span<const double>{});

  const ExecPlan plan = make_plan(config, lengths, pool_.size());
  const std::size_t modules = config.locals.size() + 1;
  const std::size_t d = config.dim;

  // Output slots, all allocated before any task runs.
  std::vector<std::vector<Matrix>> branches(batches.size());
  std::vector<hierarchy::GlobalBranchResult> globals(batches.size());
  std::vector<std::vector<std::vector<hierarchy::ShardResult>>> shards(batches.size());
  for (std::size_t s = 0; s < batches.size(); ++s) {
    branches[s].assign(modules, Matrix(lengths[s], d));
    shards[s].resize(modules);
    for (std::size_t i = 0; i < config.locals.size(); ++i)
      shards[s][i + 1].resize(hierarchy::shard_count(lengths[s], config.locals[i].shard));
  }

  std::vector<std::exception_ptr> errors(plan.tasks.size());
  auto execute = [&](std::size_t idx) {
    const ShardTask& t = plan.tasks[idx];
    const SequenceBatch& batch = batches[t.sequence];
    try {
      if (t.module == 0) {
        globals[t.sequence] = hierarchy::run_global_branch(
            config.global_init, batch, etas[t.sequence][0], config.global_chunk,
            branches[t.sequence][0]);
      } else {
        shards[t.sequence][t.module][t.shard] = hierarchy::run_local_shard(
            config.locals[t.module - 1], batch, etas[t.sequence][t.module], t.begin, t.end,
            branches[t.sequence][t.module]);
      }
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  };

  std::vector<std::vector<WorkerPool::Job>> queues(plan.workers);
  const auto assignment = plan.queues();
  for (std::size_t w = 0; w < plan.workers; ++w)
    for (std::size_t idx : assignment[w]) queues[w].push_back([&execute, idx] { execute(idx); });
  pool_.run(queues);

  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<HierarchyResult> results(batches.size());
  for (std::size_t s = 0; s < batches.size(); ++s) {
    HierarchyResult& r = results[s];
    std::vector<Matrix> used;
    r.final_state.global = config.global_init;
    if (config.global_enabled) {
      r.final_state.global = globals[s].boundaries.back();
      used.push_back(std::move(branches[s][0]));
    }
    for (std::size_t i = 0; i < config.locals.size(); ++i) {
      hierarchy::LocalState last{config.locals[i].init, qk::ProjectionState::empty(d)};
      std::vector<memory::FastWeights> entries;
      for (auto& shard : shards[s][i + 1]) {
        entries.push_back(std::move(shard.entry));
        last = std::move(shard.last);
      }
      r.final_state.locals.push_back(std::move(last));
      r.shard_entry_states.push_back(std::move(entries));
      used.push_back(std::move(branches[s][i + 1]));
    }
    r.outputs = hierarchy::merge_branches(used, lengths[s], d);
  }
  return results;
}

HierarchyResult run_sharded(const HierarchyConfig& config, const SequenceBatch& batch,
                            std::size_t workers, const ModuleRates* rates) {
  ShardedExecutor executor(workers);
  return executor.run(config, batch, rates);
}

Matrix causal_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (!q.same_shape(k) || q.rows() != v.rows())
    throw ShapeError("causal_attention: q, k, v disagree");
  const std::size_t length = q.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix out(length, v.cols());
  std::vector<double> scores(length);
  for (std::size_t t = 0; t < length; ++t) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s <= t; ++s) {
      scores[s] = scale * dot(q.row(t), k.row(s));
      peak = std::max(peak, scores[s]);
    }
    double z = 0.0;
    for (std::size_t s = 0; s <= t; ++s) {
      scores[s] = std::exp(scores[s] - peak);
      z += scores[s];
    }
    auto o = out.row(t);
    for (std::size_t s = 0; s <= t; ++s) {
      const double w = scores[s] / z;
      const auto vs = v.row(s);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += w * vs[j];
    }
  }
  return out;
}

SequenceBatch synthetic_batch(std::size_t length, std::size_t dim, bool unit, double eta,
                              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SequenceBatch b{Matrix(length, dim), Matrix(length, dim), Matrix(length, dim),
                  std::vector<double>(length, eta), unit};
  for (Matrix* m : {&b.queries, &b.keys, &b.values})
    for (double& x : m->data()) x = u(rng);
  if (unit) {
    for (std::size_t t = 0; t < length; ++t) {
      for (Matrix* m : {&b.queries, &b.keys}) {
        const Vector n = normalized(m->row(t));
        std::copy(n.span().begin(), n.span().end(), m->row(t).begin());
      }
    }
  }
  return b;
}

bool BenchRecord::valid() const {
  return seq_len > 0 && tokens_per_batch > 0 && workers > 0 && wall_time_s > 0.0 &&
         tokens_per_s > 0.0 && std::isfinite(wall_time_s) && std::isfinite(tokens_per_s);
}

std::vector<BenchRecord> benchmark(std::span<const BenchConfig> configs,
                                   std::span<const std::size_t> lengths,
                                   std::size_t tokens_per_batch, const BenchOptions& options) {
  if (options.repetitions == 0) throw ConfigError("benchmark: repetitions must be >= 1");
  std::vector<BenchRecord> records;
  for (const BenchConfig& cfg : configs) {
    ShardedExecutor executor(cfg.workers);
    const std::size_t d = cfg.hierarchy.dim;
    for (std::size_t length : lengths) {
      if (length == 0) throw ConfigError("benchmark: sequence length must be >= 1");
      const std::size_t count = std::max<std::size_t>(1, tokens_per_batch / length);
      std::mt19937_64 rng(options.seed);
      std::vector<SequenceBatch> batches;
      for (std::size_t s = 0; s < count; ++s)
        batches.push_back(synthetic_batch(length, d, options.normalized, options.eta, rng));

      double sink = 0.0;
      auto step = [&] {
        if (cfg.attention) {
          executor.pool().parallel_for(batches.size(), [&](std::size_t s) {
            const Matrix o = causal_attention(batches[s].queries, batches[s].keys,
                                              batches[s].values);
            if (s == 0) sink += o(o.rows() - 1, 0);
          });
        } else {
          const auto results = executor.run_many(cfg.hierarchy, batches);
          sink += results.front().outputs.back()[0];
        }
      };
      for (std::size_t i = 0; i < options.warmup; ++i) step();
      std::vector<double> times;
      for (std::size_t i = 0; i < options.repetitions; ++i) {
        const auto start = std::chrono::steady_clock::now();
        step();
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(stop - start).count());
      }
      std::sort(times.begin(), times.end());
      const std::size_t n = times.size();
      const double median = n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
      if (!std::isfinite(sink)) throw DivergenceError("benchmark: non-finite output");

      BenchRecord rec;
      rec.seq_len = length;
      rec.tokens_per_batch = tokens_per_batch;
      rec.config = cfg.name;
      if (!cfg.attention) {
        rec.chunk_sizes.push_back(cfg.hierarchy.global_chunk);
        for (const auto& l : cfg.hierarchy.locals) rec.chunk_sizes.push_back(l.chunk);
      }
      rec.workers = cfg.workers;
      rec.wall_time_s = median;
      rec.tokens_per_s = static_cast<double>(count * length) / median;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::string_view bench_csv_header() {
  return "seq_len,tokens_per_batch,config,workers,wall_time_s,tokens_per_s";
}

void write_bench_csv(std::ostream& out, std::span<const BenchRecord> records) {
  out << bench_csv_header() << '\n';
  const auto old = out.precision(17);
  for (const auto& r : records) {
    out << r.seq_len << ',' << r.tokens_per_batch << ',' << r.config << ',' << r.workers << ','
        << r.wall_time_s << ',' << r.tokens_per_s << '\n';
  }
  out.precision(old);
}

}  // namespace tnt::exec
