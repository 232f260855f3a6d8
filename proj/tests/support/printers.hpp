// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Readable gtest failure output for the core value types.

#pragma once

#include <ostream>

#include "tnt/memory.hpp"
#include "tnt/numerics.hpp"

namespace tnt {

inline void PrintTo(const Matrix& m, std::ostream* os) {
  *os << m.rows() << "x" << m.cols() << " [";
  os->precision(17);
  for (std::size_t i = 0; i < m.size(); ++i) *os << (i ? (i % m.cols() ? ", " : "; ") : "") << m.data()[i];
  *os << "]";
}

inline void PrintTo(const Vector& v, std::ostream* os) {
  os->precision(17);
  *os << "(";
  for (std::size_t i = 0; i < v.dim(); ++i) *os << (i ? ", " : "") << v[i];
  *os << ")";
}

namespace memory {
inline void PrintTo(const FastWeights& w, std::ostream* os) {
  *os << to_string(w.arch) << " w1=";
  tnt::PrintTo(w.w1, os);
  if (!w.w2.empty()) {
    *os << " w2=";
    tnt::PrintTo(w.w2, os);
  }
}
}  // namespace memory

}  // namespace tnt
