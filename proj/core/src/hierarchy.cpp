// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/hierarchy.hpp"

#include <algorithm>
#include <string>

namespace tnt::hierarchy {
namespace {

void check_dims(const HierarchyConfig& config, const SequenceBatch& batch) {
  batch.validate();
  if (batch.length() > 0 && batch.dim() != config.dim)
    throw ShapeError("hierarchy: batch dimension " + std::to_string(batch.dim()) +
                     " does not match config dimension " + std::to_string(config.dim));
}

void write_row(Matrix& out, std::size_t t, const Vector& v) {
  std::copy(v.span().begin(), v.span().end(), out.row(t).begin());
}

}  // namespace

std::string_view to_string(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::kShardAccumulate: return "shard_accumulate";
    case ProjectionMode::kChunkLocal: return "chunk_local";
    case ProjectionMode::kNone: return "none";
  }
  return "unknown";
}

ProjectionMode projection_mode_from_string(std::string_view name) {
  if (name == "shard_accumulate") return ProjectionMode::kShardAccumulate;
  if (name == "chunk_local") return ProjectionMode::kChunkLocal;
  if (name == "none") return ProjectionMode::kNone;
  throw ConfigError("unknown projection mode '" + std::string(name) + "'");
}

void HierarchyConfig::validate() const {
  if (dim == 0) throw ConfigError("hierarchy: dimension must be >= 1");
  if (global_chunk == 0) throw ConfigError("hierarchy: global chunk size must be >= 1");
  if (global_enabled && global_init.dim() != dim)
    throw ConfigError("hierarchy: global initial state has the wrong dimension");
  for (std::size_t i = 0; i < locals.size(); ++i) {
    const LocalSpec& l = locals[i];
    const std::string id = "hierarchy: local " + std::to_string(i) + ": ";
    if (l.chunk == 0) throw ConfigError(id + "chunk size must be >= 1");
    if (l.shard < l.chunk) throw ConfigError(id + "shard length must be >= chunk size");
    if (l.shard % l.chunk != 0)
      throw ConfigError(id + "chunk size " + std::to_string(l.chunk) +
                        " must divide shard length " + std::to_string(l.shard));
    if (l.init.dim() != dim) throw ConfigError(id + "initial state has the wrong dimension");
  }
}

std::span<const double> module_etas(const SequenceBatch& batch, const ModuleRates* rates,
                                    std::size_t module) {
  if (rates == nullptr) return batch.etas;
  const std::vector<double>& etas =
      module == 0 ? rates->global : rates->locals.at(module - 1);
  if (etas.size() != batch.length())
    throw ShapeError("hierarchy: module learning-rate stream has the wrong length");
  return etas;
}

std::size_t shard_count(std::size_t length, std::size_t shard) {
  return shard == 0 ? 0 : (length + shard - 1) / shard;
}

GlobalBranchResult run_global_branch(const FastWeights& v0, const SequenceBatch& batch,
                                     std::span<const double> etas, std::size_t global_chunk,
                                     Matrix& out) {
  if (global_chunk == 0) throw ConfigError("global chunk size must be >= 1");
  if (etas.size() != batch.length()) throw ShapeError("global branch: eta stream length");
  GlobalBranchResult result;
  result.boundaries.reserve(shard_count(batch.length(), global_chunk) + 1);
  result.boundaries.push_back(v0);
  memory::ChunkAccumulator acc;
  for (std::size_t begin = 0; begin < batch.length(); begin += global_chunk) {
    const std::size_t end = std::min(batch.length(), begin + global_chunk);
    const FastWeights& start = result.boundaries.back();
    for (std::size_t t = begin; t < end; ++t) {
      if (!out.empty()) write_row(out, t, memory::forward(start, batch.query(t)));
    }
    acc.restart(start);
    for (std::size_t t = begin; t < end; ++t) acc.accumulate(batch.key(t), batch.value(t), etas[t]);
    result.boundaries.push_back(acc.materialize());
  }
  return result;
}

ShardResult run_local_shard(const LocalSpec& spec, const SequenceBatch& batch,
                            std::span<const double> etas, std::size_t begin,
                            std::size_t end, Matrix& out,
                            std::vector<FastWeights>* states) {
  if (etas.size() != batch.length()) throw ShapeError("local shard: eta stream length");
  ShardResult result;
  result.entry = spec.init;
  result.last.weights = spec.init;
  result.last.projection = qk::ProjectionState::empty(spec.init.dim());
  const bool retrieve = !out.empty();
  const bool project = retrieve && spec.projection != ProjectionMode::kNone;

  memory::ChunkAccumulator acc;
  acc.restart(spec.init);
  qk::ProjectionState& proj = result.last.projection;
  for (std::size_t t = begin; t < end; ++t) {
    if (t > begin && (t - begin) % spec.chunk == 0) {
      acc.restart(acc.current());
      if (spec.projection == ProjectionMode::kChunkLocal) proj = qk::reset(proj);
    }
    const FastWeights& w = acc.absorb(batch.key(t), batch.value(t), etas[t]);
    if (states != nullptr) states->push_back(w);
    if (!retrieve) continue;
    if (project) {
      qk::absorb_key_in_place(proj, batch.key(t), batch.normalized);
      write_row(out, t, memory::forward(w, qk::project_query(proj, batch.query(t))));
    } else {
      write_row(out, t, memory::forward(w, batch.query(t)));
    }
  }
  if (end > begin) result.last.weights = acc.current();
  return result;
}

std::vector<FastWeights> global_compress(const FastWeights& v0, const SequenceBatch& batch,
                                         std::size_t global_chunk) {
  return global_compress(v0, batch, batch.etas, global_chunk);
}

std::vector<FastWeights> global_compress(const FastWeights& v0, const SequenceBatch& batch,
                                         std::span<const double> etas,
                                         std::size_t global_chunk) {
  batch.validate();
  Matrix none;
  return run_global_branch(v0, batch, etas, global_chunk, none).boundaries;
}

std::vector<FastWeights> local_compress_with_reset(const LocalSpec& spec,
                                                   const SequenceBatch& batch) {
  return local_compress_with_reset(spec, batch, batch.etas);
}

std::vector<FastWeights> local_compress_with_reset(const LocalSpec& spec,
                                                   const SequenceBatch& batch,
                                                   std::span<const double> etas) {
  batch.validate();
  if (spec.chunk == 0 || spec.shard < spec.chunk || spec.shard % spec.chunk != 0)
    throw ConfigError("local memory: chunk size must divide shard length");
  std::vector<FastWeights> states;
  states.reserve(batch.length());
  Matrix none;
  for (std::size_t begin = 0; begin < batch.length(); begin += spec.shard) {
    const std::size_t end = std::min(batch.length(), begin + spec.shard);
    run_local_shard(spec, batch, etas, begin, end, none, &states);
  }
  return states;
}

std::vector<qk::ProjectionState> local_projection_states(const LocalSpec& spec,
                                                         const SequenceBatch& batch) {
  switch (spec.projection) {
    case ProjectionMode::kShardAccumulate:
      return qk::chunkwise_projection_scan(batch.keys, spec.chunk, spec.shard, batch.normalized);
    case ProjectionMode::kChunkLocal:
      return qk::chunkwise_projection_scan(batch.keys, spec.chunk, spec.chunk, batch.normalized);
    case ProjectionMode::kNone:
      break;
  }
  return {};
}

std::vector<Vector> merge_branches(std::span<const Matrix> branches, std::size_t length,
                                   std::size_t dim) {
  std::vector<Vector> out;
  out.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    if (branches.empty()) {
      out.emplace_back(dim);
      continue;
    }
    Vector o(branches[0].row(t));
    for (std::size_t b = 1; b < branches.size(); ++b) {
      const auto row = branches[b].row(t);
      for (std::size_t j = 0; j < dim; ++j) o[j] = o[j] + row[j];
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<Vector> hierarchical_retrieve(const BranchStreams& streams,
                                          const SequenceBatch& batch,
                                          const HierarchyConfig& config) {
  const std::size_t length = batch.length();
  const std::size_t d = config.dim;
  if (streams.local_states.size() != config.locals.size())
    throw ShapeError("hierarchical_retrieve: one state stream per local memory is required");
  std::vector<Matrix> branches;
  if (config.global_enabled) {
    const std::size_t needed = length == 0 ? 1 : (length - 1) / config.global_chunk + 1;
    if (streams.global_boundaries.size() < needed)
      throw ShapeError("hierarchical_retrieve: not enough global boundary states");
    Matrix g(length, d);
    for (std::size_t t = 0; t < length; ++t) {
      const FastWeights& v = streams.global_boundaries[t / config.global_chunk];
      write_row(g, t, memory::forward(v, batch.query(t)));
    }
    branches.push_back(std::move(g));
  }
  for (std::size_t i = 0; i < config.locals.size(); ++i) {
    const auto& states = streams.local_states[i];
    if (states.size() != length) throw ShapeError("hierarchical_retrieve: local stream length");
    const bool project = config.locals[i].projection != ProjectionMode::kNone;
    if (project && (streams.local_projections.size() <= i ||
                    streams.local_projections[i].size() != length))
      throw ShapeError("hierarchical_retrieve: projection stream length");
    Matrix l(length, d);
    for (std::size_t t = 0; t < length; ++t) {
      if (project) {
        const Vector p = qk::project_query(streams.local_projections[i][t], batch.query(t));
        write_row(l, t, memory::forward(states[t], p));
      } else {
        write_row(l, t, memory::forward(states[t], batch.query(t)));
      }
    }
    branches.push_back(std::move(l));
  }
  return merge_branches(branches, length, d);
}

HierarchyResult run_hierarchy(const HierarchyConfig& config, const SequenceBatch& batch,
                              const ModuleRates* rates) {
  config.validate();
  check_dims(config, batch);
  const std::size_t length = batch.length();
  const std::size_t d = config.dim;

  HierarchyResult result;
  result.final_state.global = config.global_init;
  std::vector<Matrix> branches;

  if (config.global_enabled) {
    Matrix g(length, d);
    auto global = run_global_branch(config.global_init, batch, module_etas(batch, rates, 0),
                                    config.global_chunk, g);
    result.final_state.global = global.boundaries.back();
    branches.push_back(std::move(g));
  }

  for (std::size_t i = 0; i < config.locals.size(); ++i) {
    const LocalSpec& spec = config.locals[i];
    const auto etas = module_etas(batch, rates, i + 1);
    Matrix l(length, d);
    std::vector<FastWeights> entries;
    LocalState last{spec.init, qk::ProjectionState::empty(d)};
    for (std::size_t begin = 0; begin < length; begin += spec.shard) {
      const std::size_t end = std::min(length, begin + spec.shard);
      ShardResult shard = run_local_shard(spec, batch, etas, begin, end, l);
      entries.push_back(std::move(shard.entry));
      last = std::move(shard.last);
    }
    result.final_state.locals.push_back(std::move(last));
    result.shard_entry_states.push_back(std::move(entries));
    branches.push_back(std::move(l));
  }

  result.outputs = merge_branches(branches, length, d);
  return result;
}

}  // namespace tnt::hierarchy
