// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration and its JSON schema (schema_version 1).
//
//   {
//     "schema_version": 1,
//     "seed": 0,                      // slow-weight initialization
//     "output_dir": "out",
//     "eval_sequences": 16,
//     "init_checkpoint": "",          // optional warm start; replaces "model"
//     "task":     { "kind", "vocab", "length", "seed" },
//     "model":    { "vocab", "dim", "arch", "activation", "hidden",
//                   "global_chunk", "global_enabled",
//                   "locals": [ { "chunk", "shard" }, ... ],
//                   "projection", "normalize_qk", "key_shift",
//                   "eta_cap", "eta_init", "init_scale" },
//     "schedule": { "stage", "steps", "learning_rate", "batch_size",
//                   "stage2_chunks", "trainable", "weight_decay",
//                   "grad_clip", "data_offset" }
//   }
//
// Missing keys take their defaults; unknown keys are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "tnt/model.hpp"
#include "tnt/tasks.hpp"

namespace tnt::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  tasks::TaskSpec task{tasks::TaskKind::kAssociativeRecall, 64, 2048, 0};
  model::ModelConfig model;
  model::TrainSchedule schedule;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t eval_sequences = 16;
  std::string init_checkpoint;

  void validate() const;
};

RunConfig default_run_config();

json to_json(const tasks::TaskSpec& task);
json to_json(const model::ModelConfig& config);
json to_json(const model::TrainSchedule& schedule);
json to_json(const RunConfig& config);

tasks::TaskSpec task_from_json(const json& j);
model::ModelConfig model_config_from_json(const json& j);
model::TrainSchedule schedule_from_json(const json& j);
RunConfig run_config_from_json(const json& j);

// Throws ConfigError naming the path when the file is missing or malformed.
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Strict field readers shared by the schema parsers.
namespace schema {
void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where);
void check_version(const json& j, std::string_view where);
std::size_t count(const json& j, const char* key, std::size_t fallback);
std::uint64_t u64(const json& j, const char* key, std::uint64_t fallback);
double real(const json& j, const char* key, double fallback);
bool flag(const json& j, const char* key, bool fallback);
std::string text(const json& j, const char* key, const std::string& fallback);
}  // namespace schema

}  // namespace tnt::cli
