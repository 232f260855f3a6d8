// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Q-K projection: queries are mapped onto the span of recently absorbed keys
// through the running sum M = sum_tau k_tau k_tau^T / |k_tau|^2 before they
// reach a local memory. The state is a single d x d matrix; no keys are kept.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tnt/numerics.hpp"

namespace tnt::qk {

struct ProjectionState {
  Matrix m;
  std::size_t tokens_absorbed = 0;

  static ProjectionState empty(std::size_t d) { return {Matrix(d, d), 0}; }
  std::size_t dim() const { return m.rows(); }
  bool operator==(const ProjectionState&) const = default;
};

// M += k k^T / |k|^2, or M += k k^T when `normalized` (unit keys).
// Throws ConfigError for a zero key in general mode.
void absorb_key_in_place(ProjectionState& s, std::span<const double> k, bool normalized);
ProjectionState absorb_key(ProjectionState s, std::span<const double> k, bool normalized);

ProjectionState reset(const ProjectionState& s);

// M q.
Vector project_query(const ProjectionState& s, std::span<const double> q);

// Per-token projection states for keys (rows of an L x d matrix), reset at
// every multiple of `shard`. Inside each chunk of size `chunk` the state is
// the carry-over from the previous chunk (zero at a shard start) followed by
// the running sum of the chunk's outer products. The fold runs left to right
// starting from the carry, so the result equals the token-by-token
// recurrence exactly.
std::vector<ProjectionState> chunkwise_projection_scan(const Matrix& keys, std::size_t chunk,
                                                       std::size_t shard, bool normalized);

}  // namespace tnt::qk
