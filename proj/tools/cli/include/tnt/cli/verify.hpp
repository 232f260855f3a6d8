// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Invariant suite run by `tnt verify`. Property ids are "<module>.<name>";
// the README lists every id with the invariant it checks.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace tnt::cli {

struct Property {
  std::string id;
  std::string description;
  // Empty string on success, otherwise a failure detail. Exceptions count as
  // failures.
  std::function<std::string()> check;
};

struct PropertyResult {
  std::string id;
  bool passed = false;
  std::string detail;
};

std::vector<Property> invariant_suite(std::uint64_t seed = 0);

// Prints one "PASS <id>" / "FAIL <id>: <detail>" line per property.
std::vector<PropertyResult> run_suite(const std::vector<Property>& suite, std::ostream& out);

}  // namespace tnt::cli
