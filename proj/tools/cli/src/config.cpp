// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <string>

namespace tnt::cli {
namespace schema {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

void check_version(const json& j, std::string_view where) {
  if (!j.contains("schema_version"))
    throw ConfigError(std::string(where) + ": missing schema_version");
  const json& v = j.at("schema_version");
  if (!v.is_number_integer() || v.get<long long>() != kSchemaVersion)
    throw ConfigError(std::string(where) + ": unsupported schema_version " + v.dump() +
                      " (expected " + std::to_string(kSchemaVersion) + ")");
}

std::size_t count(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_unsigned())
    throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t u64(const json& j, const char* key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_unsigned())
    throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

double real(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

bool flag(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(std::string("'") + key + "' must be true or false");
  return v.get<bool>();
}

std::string text(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace schema

void RunConfig::validate() const {
  task.validate();
  if (eval_sequences == 0) throw ConfigError("eval_sequences must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  // A warm start takes its model from the checkpoint; cmd_train validates the
  // combination once the checkpoint is loaded.
  if (!init_checkpoint.empty()) return;
  model.validate();
  schedule.validate(model);
  if (task.vocab > model.vocab)
    throw ConfigError("task vocab " + std::to_string(task.vocab) + " exceeds model vocab " +
                      std::to_string(model.vocab));
}

RunConfig default_run_config() { return RunConfig{}; }

json to_json(const tasks::TaskSpec& task) {
  return {{"kind", std::string(tasks::to_string(task.kind))},
          {"vocab", task.vocab},
          {"length", task.length},
          {"seed", task.seed}};
}

json to_json(const model::ModelConfig& c) {
  json locals = json::array();
  for (const auto& l : c.locals) locals.push_back({{"chunk", l.chunk}, {"shard", l.shard}});
  return {{"vocab", c.vocab},
          {"dim", c.dim},
          {"arch", std::string(memory::to_string(c.arch))},
          {"activation", std::string(to_string(c.activation))},
          {"hidden", c.hidden},
          {"global_chunk", c.global_chunk},
          {"global_enabled", c.global_enabled},
          {"locals", locals},
          {"projection", std::string(hierarchy::to_string(c.projection))},
          {"normalize_qk", c.normalize_qk},
          {"key_shift", c.key_shift},
          {"eta_cap", c.eta_cap},
          {"eta_init", c.eta_init},
          {"init_scale", c.init_scale}};
}

json to_json(const model::TrainSchedule& s) {
  return {{"stage", std::string(model::to_string(s.stage))},
          {"steps", s.steps},
          {"learning_rate", s.learning_rate},
          {"batch_size", s.batch_size},
          {"stage2_chunks", s.stage2_chunks},
          {"trainable", std::string(model::to_string(s.trainable))},
          {"weight_decay", s.weight_decay},
          {"grad_clip", s.grad_clip},
          {"data_offset", s.data_offset}};
}

json to_json(const RunConfig& c) {
  json j = {{"schema_version", kSchemaVersion},
            {"seed", c.seed},
            {"output_dir", c.output_dir},
            {"eval_sequences", c.eval_sequences},
            {"task", to_json(c.task)},
            {"model", to_json(c.model)},
            {"schedule", to_json(c.schedule)}};
  if (!c.init_checkpoint.empty()) j["init_checkpoint"] = c.init_checkpoint;
  return j;
}

tasks::TaskSpec task_from_json(const json& j) {
  schema::check_keys(j, {"kind", "vocab", "length", "seed"}, "task");
  tasks::TaskSpec t = RunConfig{}.task;
  t.kind = tasks::task_kind_from_string(schema::text(j, "kind", std::string(to_string(t.kind))));
  t.vocab = schema::count(j, "vocab", t.vocab);
  t.length = schema::count(j, "length", t.length);
  t.seed = schema::u64(j, "seed", t.seed);
  return t;
}

model::ModelConfig model_config_from_json(const json& j) {
  schema::check_keys(j,
                     {"vocab", "dim", "arch", "activation", "hidden", "global_chunk",
                      "global_enabled", "locals", "projection", "normalize_qk", "key_shift",
                      "eta_cap", "eta_init", "init_scale"},
                     "model");
  model::ModelConfig c;
  c.vocab = schema::count(j, "vocab", c.vocab);
  c.dim = schema::count(j, "dim", c.dim);
  c.arch = memory::arch_from_string(schema::text(j, "arch", std::string(to_string(c.arch))));
  c.activation =
      activation_from_string(schema::text(j, "activation", std::string(to_string(c.activation))));
  c.hidden = schema::count(j, "hidden", c.hidden);
  c.global_chunk = schema::count(j, "global_chunk", c.global_chunk);
  c.global_enabled = schema::flag(j, "global_enabled", c.global_enabled);
  if (j.contains("locals")) {
    const json& ls = j.at("locals");
    if (!ls.is_array()) throw ConfigError("model.locals must be an array");
    c.locals.clear();
    for (const json& l : ls) {
      schema::check_keys(l, {"chunk", "shard"}, "model.locals[]");
      c.locals.push_back({schema::count(l, "chunk", 8), schema::count(l, "shard", 256)});
    }
  }
  c.projection = hierarchy::projection_mode_from_string(
      schema::text(j, "projection", std::string(to_string(c.projection))));
  c.normalize_qk = schema::flag(j, "normalize_qk", c.normalize_qk);
  c.key_shift = schema::flag(j, "key_shift", c.key_shift);
  c.eta_cap = schema::real(j, "eta_cap", c.eta_cap);
  c.eta_init = schema::real(j, "eta_init", c.eta_init);
  c.init_scale = schema::real(j, "init_scale", c.init_scale);
  return c;
}

model::TrainSchedule schedule_from_json(const json& j) {
  schema::check_keys(j,
                     {"stage", "steps", "learning_rate", "batch_size", "stage2_chunks",
                      "trainable", "weight_decay", "grad_clip", "data_offset"},
                     "schedule");
  model::TrainSchedule s;
  s.stage = model::stage_from_string(schema::text(j, "stage", std::string(to_string(s.stage))));
  s.steps = schema::count(j, "steps", s.steps);
  s.learning_rate = schema::real(j, "learning_rate", s.learning_rate);
  s.batch_size = schema::count(j, "batch_size", s.batch_size);
  if (j.contains("stage2_chunks")) {
    const json& cs = j.at("stage2_chunks");
    if (!cs.is_array()) throw ConfigError("schedule.stage2_chunks must be an array");
    for (const json& c : cs) {
      if (!c.is_number_unsigned())
        throw ConfigError("schedule.stage2_chunks entries must be non-negative integers");
      s.stage2_chunks.push_back(c.get<std::size_t>());
    }
  }
  s.trainable = model::trainable_set_from_string(
      schema::text(j, "trainable", std::string(to_string(s.trainable))));
  s.weight_decay = schema::real(j, "weight_decay", s.weight_decay);
  s.grad_clip = schema::real(j, "grad_clip", s.grad_clip);
  s.data_offset = schema::u64(j, "data_offset", s.data_offset);
  return s;
}

RunConfig run_config_from_json(const json& j) {
  schema::check_keys(j,
                     {"schema_version", "seed", "output_dir", "eval_sequences", "init_checkpoint",
                      "task", "model", "schedule"},
                     "config");
  schema::check_version(j, "config");
  RunConfig c;
  c.seed = schema::u64(j, "seed", c.seed);
  c.output_dir = schema::text(j, "output_dir", c.output_dir);
  c.eval_sequences = schema::count(j, "eval_sequences", c.eval_sequences);
  c.init_checkpoint = schema::text(j, "init_checkpoint", c.init_checkpoint);
  if (j.contains("task")) c.task = task_from_json(j.at("task"));
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
  c.validate();
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return run_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace tnt::cli
