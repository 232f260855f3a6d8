// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Subcommands of the `tnt` tool. Each command is a plain function over
// parsed options so tests can drive it without a process boundary; run_cli
// adds argument parsing and maps exceptions to exit codes.
//
// Exit codes: 0 success, 1 usage or config error, 2 property failure,
// 3 numerical divergence.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tnt/cli/config.hpp"
#include "tnt/model.hpp"
#include "tnt/parallel_exec.hpp"

namespace tnt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitProperty = 2;
inline constexpr int kExitDivergence = 3;

// Raised by verify when a property fails; maps to exit 2.
class PropertyFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainSummary {
  double initial_loss = 0.0;
  double final_loss = 0.0;  // mean batch loss over the last min(10, steps) steps
  double eval_loss = 0.0;   // held-out loss at the trained chunk sizes
  double wall_time_s = 0.0;
  double tokens_per_s = 0.0;
  std::size_t steps = 0;
};

json to_json(const TrainSummary& s);

// Writes checkpoint.json, loss.csv, summary.json and config.json into
// config.output_dir. When config.init_checkpoint is set the run starts from
// those weights and adopts the checkpoint's model config.
TrainSummary cmd_train(const RunConfig& config, std::size_t workers, std::ostream& log);

struct SweepOptions {
  std::filesystem::path checkpoint;
  std::vector<std::size_t> chunks{1, 2, 4, 8, 16, 32, 64};
  std::optional<tasks::TaskSpec> task;  // defaults to the checkpoint's task
  std::size_t eval_sequences = 16;
  std::filesystem::path output_dir = "out";
  std::size_t workers = 1;
};

// Writes sweep.csv (chunk_size,loss,perplexity) into output_dir.
std::vector<model::EvalPoint> cmd_sweep(const SweepOptions& options, std::ostream& log);
void write_sweep_csv(std::ostream& out, std::span<const model::EvalPoint> points);

// Ablation variants: "base", "no_global", "no_projection", "locals_1" ..
// "locals_4". locals_N rebuilds the local set from the first local's chunk c
// and shard S: {c}, {c, 2c}, {c/2, c, 2c}, {c/2, c, 2c, 4c}, each clamped to
// [1, S].
std::vector<std::string> default_ablation_variants();
model::ModelConfig ablation_variant(const model::ModelConfig& base, const std::string& variant);

// Trains every variant with the base seed, schedule and data; writes
// ablation.json into config.output_dir and returns it. The CLI always adds
// "base" to a requested subset.
json cmd_ablate(const RunConfig& config, const std::vector<std::string>& variants,
                std::size_t workers, std::ostream& log);

// Runs the invariant suite; returns the number of failed properties.
std::size_t cmd_verify(std::uint64_t seed, bool inject_inner_grad_fault, std::ostream& out);

struct BenchGrid {
  std::vector<std::size_t> lengths{1024, 2048, 4096, 8192};
  std::size_t tokens_per_batch = 8192;
  std::size_t dim = 16;
  std::vector<exec::BenchConfig> configs;  // empty selects default_bench_configs
  exec::BenchOptions options;
};

std::vector<exec::BenchConfig> default_bench_configs(std::size_t dim, std::size_t workers,
                                                     std::uint64_t seed);
// Grid schema:
//   { "schema_version": 1, "lengths": [...], "tokens_per_batch": n, "dim": d,
//     "warmup": n, "repetitions": n,
//     "configs": [ { "name", "kind": "tnt" | "attention", "global_chunk",
//                    "locals": [ { "chunk", "shard" } ], "arch" } ] }
BenchGrid bench_grid_from_json(const json& j, std::size_t workers, std::uint64_t seed);

// Writes bench.csv into output_dir and returns the records.
std::vector<exec::BenchRecord> cmd_bench(const BenchGrid& grid,
                                         const std::filesystem::path& output_dir,
                                         std::ostream& log);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tnt::cli
