// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/qk_projection.hpp"

#include <string>

namespace tnt::qk {
namespace {

// Outer-product term for one key, rounded exactly as absorb_key rounds it.
Matrix key_term(std::span<const double> k, bool normalized) {
  Matrix term = outer(k, k);
  if (!normalized) {
    const double n2 = dot(k, k);
    if (n2 == 0.0) throw ConfigError("Q-K projection: zero-norm key in general mode");
    for (double& x : term.data()) x = x / n2;
  }
  return term;
}

}  // namespace

void absorb_key_in_place(ProjectionState& s, std::span<const double> k, bool normalized) {
  if (k.size() != s.dim()) throw ShapeError("absorb_key: key dimension mismatch");
  const std::size_t d = k.size();
  if (normalized) {
    for (std::size_t i = 0; i < d; ++i) {
      double* row = s.m.row(i).data();
      for (std::size_t j = 0; j < d; ++j) row[j] = row[j] + k[i] * k[j];
    }
  } else {
    const double n2 = dot(k, k);
    if (n2 == 0.0) throw ConfigError("Q-K projection: zero-norm key in general mode");
    for (std::size_t i = 0; i < d; ++i) {
      double* row = s.m.row(i).data();
      for (std::size_t j = 0; j < d; ++j) row[j] = row[j] + (k[i] * k[j]) / n2;
    }
  }
  ++s.tokens_absorbed;
}

ProjectionState absorb_key(ProjectionState s, std::span<const double> k, bool normalized) {
  absorb_key_in_place(s, k, normalized);
  return s;
}

ProjectionState reset(const ProjectionState& s) { return ProjectionState::empty(s.dim()); }

Vector project_query(const ProjectionState& s, std::span<const double> q) {
  if (q.size() != s.dim()) throw ShapeError("project_query: query dimension mismatch");
  return matvec(s.m, q);
}

std::vector<ProjectionState> chunkwise_projection_scan(const Matrix& keys, std::size_t chunk,
                                                       std::size_t shard, bool normalized) {
  if (chunk == 0 || shard == 0 || shard % chunk != 0) {
    throw ConfigError("chunkwise_projection_scan: need chunk >= 1 and shard a multiple of "
                      "chunk (chunk=" + std::to_string(chunk) + ", shard=" +
                      std::to_string(shard) + ")");
  }
  const std::size_t length = keys.rows();
  const std::size_t d = keys.cols();
  std::vector<ProjectionState> states(length);
  ProjectionState carry = ProjectionState::empty(d);

  for (std::size_t begin = 0; begin < length; begin += chunk) {
    const std::size_t end = std::min(length, begin + chunk);
    if (begin % shard == 0) carry = ProjectionState::empty(d);

    // Outer products of the chunk are independent of each other.
    std::vector<Matrix> terms;
    terms.reserve(end - begin);
    for (std::size_t t = begin; t < end; ++t) terms.push_back(key_term(keys.row(t), normalized));

    // Intra-chunk running sum seeded with the carry-over state.
    ProjectionState running = carry;
    for (std::size_t t = begin; t < end; ++t) {
      running.m += terms[t - begin];
      ++running.tokens_absorbed;
      states[t] = running;
    }
    carry = std::move(running);
  }
  return states;
}

}  // namespace tnt::qk
