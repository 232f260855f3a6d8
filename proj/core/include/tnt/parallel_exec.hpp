// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Context-parallel execution of the hierarchy.
//
// Each sequence contributes one global task (the serial pass over its global
// chunks) and one task per (local module, shard). Tasks read the immutable
// batch and write disjoint rows and slots, so the static plan can hand them
// to any worker. A single coordinator merges the slots in (sequence, module,
// shard) order after the pool drains.

#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tnt/hierarchy.hpp"

namespace tnt::exec {

using hierarchy::HierarchyConfig;
using hierarchy::HierarchyResult;
using hierarchy::ModuleRates;
using memory::SequenceBatch;

// Fixed-size pool of OS threads. run() hands queue w to worker w and blocks
// until every queue is drained.
class WorkerPool {
 public:
  using Job = std::function<void()>;

  explicit WorkerPool(std::size_t workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return size_; }

  // queues.size() must not exceed size(). Jobs must not throw.
  void run(std::span<const std::vector<Job>> queues);

  // fn(i) for i in [0, n), striped statically across workers.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

 private:
  void worker_loop(std::size_t index);

  std::size_t size_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::span<const std::vector<Job>> queues_;
  std::uint64_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
};

// Unit of scheduled work. module 0 is the global pass over the whole
// sequence; module i + 1 is shard `shard` of local i.
struct ShardTask {
  std::size_t sequence = 0;
  std::size_t module = 0;
  std::size_t shard = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t cost = 0;
};

struct ExecPlan {
  std::size_t workers = 1;
  std::vector<ShardTask> tasks;       // merge order: (sequence, module, shard)
  std::vector<std::size_t> worker_of;  // worker_of[i] runs tasks[i]

  // Task indices per worker, in ascending task order.
  std::vector<std::vector<std::size_t>> queues() const;
  // Every task assigned exactly once to a worker in [0, workers).
  void validate() const;
};

// Longest-processing-time static assignment: tasks by descending cost (ties
// by merge order) each go to the least-loaded worker (ties by index).
ExecPlan make_plan(const HierarchyConfig& config, std::span<const std::size_t> lengths,
                   std::size_t workers);

class ShardedExecutor {
 public:
  explicit ShardedExecutor(std::size_t workers);

  std::size_t workers() const { return pool_.size(); }
  WorkerPool& pool() { return pool_; }

  HierarchyResult run(const HierarchyConfig& config, const SequenceBatch& batch,
                      const ModuleRates* rates = nullptr);

  // rates is empty or holds one entry (possibly null) per batch.
  std::vector<HierarchyResult> run_many(const HierarchyConfig& config,
                                        std::span<const SequenceBatch> batches,
                                        std::span<const ModuleRates* const> rates = {});

 private:
  WorkerPool pool_;
};

// Bit-identical to hierarchy::run_hierarchy for every worker count.
HierarchyResult run_sharded(const HierarchyConfig& config, const SequenceBatch& batch,
                            std::size_t workers, const ModuleRates* rates = nullptr);

// Naive causal softmax attention, O(L^2 d): row t attends to rows 0..t with
// scale 1/sqrt(d). Used only as a benchmark reference.
Matrix causal_attention(const Matrix& q, const Matrix& k, const Matrix& v);

// Random streams: entries U[-1, 1] (rows unit-normalized for q and k when
// `normalized`), constant eta.
SequenceBatch synthetic_batch(std::size_t length, std::size_t dim, bool normalized, double eta,
                              std::mt19937_64& rng);

struct BenchConfig {
  std::string name;
  HierarchyConfig hierarchy;  // ignored for attention rows except dim
  std::size_t workers = 1;
  bool attention = false;
};

struct BenchRecord {
  std::size_t seq_len = 0;
  std::size_t tokens_per_batch = 0;
  std::string config;
  std::vector<std::size_t> chunk_sizes;  // C_G then each C_L; empty for attention
  std::size_t workers = 1;
  double wall_time_s = 0.0;
  double tokens_per_s = 0.0;

  bool valid() const;
};

struct BenchOptions {
  std::size_t warmup = 2;
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;
  bool normalized = true;
  double eta = 0.01;
};

// For every (config, length) pair: floor(tokens_per_batch / length) sequences
// (at least one), `warmup` untimed runs, then the median wall time of
// `repetitions` timed runs on a monotonic clock.
std::vector<BenchRecord> benchmark(std::span<const BenchConfig> configs,
                                   std::span<const std::size_t> lengths,
                                   std::size_t tokens_per_batch, const BenchOptions& options);

std::string_view bench_csv_header();
void write_bench_csv(std::ostream& out, std::span<const BenchRecord> records);

}  // namespace tnt::exec
