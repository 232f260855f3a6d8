// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/cli/checkpoint.hpp"

#include <string>

namespace tnt::cli {

json checkpoint_to_json(const Checkpoint& ckpt) {
  json tensors = json::object();
  for (const auto& p : model::parameters(ckpt.weights)) {
    const Matrix& m = *p.value;
    tensors[p.name] = {{"rows", m.rows()},
                       {"cols", m.cols()},
                       {"data", std::vector<double>(m.data().begin(), m.data().end())}};
  }
  return {{"schema_version", kSchemaVersion},
          {"format", "tnt-checkpoint"},
          {"model", to_json(ckpt.config)},
          {"task", to_json(ckpt.task)},
          {"tensors", tensors}};
}

Checkpoint checkpoint_from_json(const json& j) {
  schema::check_keys(j, {"schema_version", "format", "model", "task", "tensors"}, "checkpoint");
  schema::check_version(j, "checkpoint");
  if (schema::text(j, "format", "") != "tnt-checkpoint")
    throw ConfigError("checkpoint: format must be 'tnt-checkpoint'");
  if (!j.contains("model") || !j.contains("tensors"))
    throw ConfigError("checkpoint: missing model or tensors");

  Checkpoint ckpt;
  ckpt.config = model_config_from_json(j.at("model"));
  ckpt.config.validate();
  if (j.contains("task")) ckpt.task = task_from_json(j.at("task"));
  // Shapes come from a fresh initialization of the stored config; every
  // tensor is then overwritten from the file.
  ckpt.weights = model::SlowWeights::initialize(ckpt.config, 0);
  const json& tensors = j.at("tensors");
  if (!tensors.is_object()) throw ConfigError("checkpoint: tensors must be an object");
  const auto params = model::parameters(ckpt.weights);
  if (tensors.size() != params.size())
    throw ShapeError("checkpoint: expected " + std::to_string(params.size()) +
                     " tensors, found " + std::to_string(tensors.size()));
  for (const auto& p : params) {
    if (!tensors.contains(p.name)) throw ShapeError("checkpoint: missing tensor '" + p.name + "'");
    const json& t = tensors.at(p.name);
    schema::check_keys(t, {"rows", "cols", "data"}, "checkpoint tensor");
    const std::size_t rows = schema::count(t, "rows", 0);
    const std::size_t cols = schema::count(t, "cols", 0);
    if (rows != p.value->rows() || cols != p.value->cols())
      throw ShapeError("checkpoint: tensor '" + p.name + "' is " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " but the model config needs " +
                       std::to_string(p.value->rows()) + "x" + std::to_string(p.value->cols()));
    const json& data = t.at("data");
    if (!data.is_array() || data.size() != p.value->size())
      throw ShapeError("checkpoint: tensor '" + p.name + "' has the wrong number of entries");
    auto dst = p.value->data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (!data[i].is_number()) throw ConfigError("checkpoint: non-numeric tensor entry");
      dst[i] = data[i].get<double>();
    }
  }
  ckpt.weights.check(ckpt.config);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_json_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return checkpoint_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace tnt::cli
