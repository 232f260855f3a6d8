// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "tnt/cli/commands.hpp"

int main(int argc, char** argv) { return tnt::cli::run_cli(argc, argv, std::cout, std::cerr); }
