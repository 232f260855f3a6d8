// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Hierarchical memory: one global memory V updated over large chunks and N
// local memories W^(i) that restart from a learned W_init^(i) at every shard
// boundary. Retrieval sums the global branch, read at the chunk-start state
// V_{xi(t, C_G)} with the raw query, and each local branch, read at the
// per-token state W_t^(i) with the Q-K projected query.
//
// Index convention (0-based): shard m of local i covers tokens
// [m S_i, (m + 1) S_i). The state entering token m S_i is W_init^(i); the
// state returned for a token is the state after absorbing it.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tnt/memory.hpp"
#include "tnt/qk_projection.hpp"

namespace tnt::hierarchy {

using memory::FastWeights;
using memory::SequenceBatch;

enum class ProjectionMode {
  kShardAccumulate,  // running sum restarts at shard boundaries
  kChunkLocal,       // running sum restarts at every local chunk
  kNone,             // raw query (ablation)
};

std::string_view to_string(ProjectionMode mode);
ProjectionMode projection_mode_from_string(std::string_view name);

struct LocalSpec {
  std::size_t chunk = 1;
  std::size_t shard = 1;
  FastWeights init;
  ProjectionMode projection = ProjectionMode::kShardAccumulate;
};

struct HierarchyConfig {
  std::size_t dim = 0;
  std::size_t global_chunk = 1;
  bool global_enabled = true;
  FastWeights global_init;
  std::vector<LocalSpec> locals;

  // C_G >= 1; every local has C >= 1, S >= C, C | S, and weights of dim d.
  void validate() const;
};

struct LocalState {
  FastWeights weights;
  qk::ProjectionState projection;
};

struct HierarchyState {
  FastWeights global;
  std::vector<LocalState> locals;
};

// Per-module learning-rate streams. When absent every module reads
// batch.etas.
struct ModuleRates {
  std::vector<double> global;
  std::vector<std::vector<double>> locals;
};

// Chunk-boundary states V_0, V_{C_G}, V_{2 C_G}, ...; 1 + ceil(L / C_G) of
// them. Boundary n+1 is boundary n minus the eta-weighted gradients of tokens
// [n C_G, (n+1) C_G), all taken at boundary n.
std::vector<FastWeights> global_compress(const FastWeights& v0, const SequenceBatch& batch,
                                         std::size_t global_chunk);
std::vector<FastWeights> global_compress(const FastWeights& v0, const SequenceBatch& batch,
                                         std::span<const double> etas,
                                         std::size_t global_chunk);

// Per-token states of one local memory (chunkwise rule, reset per shard).
std::vector<FastWeights> local_compress_with_reset(const LocalSpec& spec,
                                                   const SequenceBatch& batch);
std::vector<FastWeights> local_compress_with_reset(const LocalSpec& spec,
                                                   const SequenceBatch& batch,
                                                   std::span<const double> etas);

// Per-token projection states for a local memory under its projection mode;
// empty for ProjectionMode::kNone.
std::vector<qk::ProjectionState> local_projection_states(const LocalSpec& spec,
                                                         const SequenceBatch& batch);

struct BranchStreams {
  std::vector<FastWeights> global_boundaries;  // empty when the global branch is off
  std::vector<std::vector<FastWeights>> local_states;
  std::vector<std::vector<qk::ProjectionState>> local_projections;
};

std::vector<Vector> hierarchical_retrieve(const BranchStreams& streams,
                                          const SequenceBatch& batch,
                                          const HierarchyConfig& config);

struct HierarchyResult {
  std::vector<Vector> outputs;
  HierarchyState final_state;
  // shard_entry_states[i][m]: state local i started shard m from.
  std::vector<std::vector<FastWeights>> shard_entry_states;
};

HierarchyResult run_hierarchy(const HierarchyConfig& config, const SequenceBatch& batch,
                              const ModuleRates* rates = nullptr);

// ---------------------------------------------------------------------------
// Building blocks shared by run_hierarchy and the sharded executor. Each
// writes disjoint rows of a branch output matrix, so any assignment of
// blocks to workers reproduces the serial result exactly.

struct GlobalBranchResult {
  std::vector<FastWeights> boundaries;
};

// Writes f(V_{xi(t, C_G)}, q_t) into row t of `out` (L x d).
GlobalBranchResult run_global_branch(const FastWeights& v0, const SequenceBatch& batch,
                                     std::span<const double> etas, std::size_t global_chunk,
                                     Matrix& out);

struct ShardResult {
  FastWeights entry;
  LocalState last;  // state after the shard's last token
};

// Runs tokens [begin, end) of one shard of a local memory and writes its
// retrievals into rows [begin, end) of `out`. When `states` is non-null the
// per-token weights are appended to it.
ShardResult run_local_shard(const LocalSpec& spec, const SequenceBatch& batch,
                            std::span<const double> etas, std::size_t begin,
                            std::size_t end, Matrix& out,
                            std::vector<FastWeights>* states = nullptr);

std::size_t shard_count(std::size_t length, std::size_t shard);

// o = branch_0 + branch_1 + ... summed in branch order, row by row.
std::vector<Vector> merge_branches(std::span<const Matrix> branches, std::size_t length,
                                   std::size_t dim);

// Resolves the eta stream for a module: global is index 0, local i is i + 1.
std::span<const double> module_etas(const SequenceBatch& batch, const ModuleRates* rates,
                                    std::size_t module);

}  // namespace tnt::hierarchy
