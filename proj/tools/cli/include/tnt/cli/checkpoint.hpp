// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint file: structured JSON with a schema version, the model config,
// the task the weights were trained on, and one entry per parameter group:
//
//   { "schema_version": 1, "format": "tnt-checkpoint",
//     "model": {...}, "task": {...},
//     "tensors": { "<group>": { "rows": r, "cols": c, "data": [...] }, ... } }
//
// Doubles are written in shortest round-trip form, so load(save(w)) == w.

#pragma once

#include <filesystem>

#include "tnt/cli/config.hpp"
#include "tnt/model.hpp"

namespace tnt::cli {

struct Checkpoint {
  model::ModelConfig config;
  tasks::TaskSpec task;
  model::SlowWeights weights;
};

json checkpoint_to_json(const Checkpoint& ckpt);
// Throws ConfigError on schema problems and ShapeError when a tensor does not
// match the stored model config.
Checkpoint checkpoint_from_json(const json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tnt::cli
