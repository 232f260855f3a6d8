// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "tnt/errors.hpp"

namespace tnt::tasks {
namespace {

constexpr std::size_t kRecallKeys = 8;

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi - 1)(rng);
}

Sequence associative_recall(const TaskSpec& spec, std::mt19937_64& rng) {
  const std::size_t half = spec.vocab / 2;
  std::vector<std::size_t> keys(half);
  std::iota(keys.begin(), keys.end(), 0);
  std::shuffle(keys.begin(), keys.end(), rng);
  keys.resize(std::min(kRecallKeys, half));
  std::vector<std::size_t> value_of(half);
  for (std::size_t k : keys) value_of[k] = uniform(rng, half, spec.vocab);

  Sequence seq;
  seq.reserve(spec.length);
  while (seq.size() < spec.length) {
    const std::size_t k = keys[uniform(rng, 0, keys.size())];
    seq.push_back(k);
    if (seq.size() < spec.length) seq.push_back(value_of[k]);
  }
  return seq;
}

Sequence copy(const TaskSpec& spec, std::mt19937_64& rng) {
  const std::size_t half = spec.vocab / 2;
  const std::size_t pattern_len = std::max<std::size_t>(1, spec.length / 16);
  const std::size_t distractor_len = spec.length / 2;
  Sequence pattern(pattern_len);
  for (auto& t : pattern) t = uniform(rng, 0, half);

  Sequence seq;
  seq.reserve(spec.length);
  for (std::size_t i = 0; i < pattern_len && seq.size() < spec.length; ++i)
    seq.push_back(pattern[i]);
  for (std::size_t i = 0; i < distractor_len && seq.size() < spec.length; ++i)
    seq.push_back(uniform(rng, half, spec.vocab));
  for (std::size_t i = 0; seq.size() < spec.length; ++i) seq.push_back(pattern[i % pattern_len]);
  return seq;
}

Sequence needle(const TaskSpec& spec, std::mt19937_64& rng) {
  const std::size_t marker = spec.vocab - 1;
  const std::size_t filler = spec.vocab - 1;
  Sequence seq(spec.length);
  for (auto& t : seq) t = uniform(rng, 0, filler);
  const std::size_t needle_token = uniform(rng, 0, filler);
  if (spec.length >= 4) {
    const std::size_t pos = uniform(rng, 0, std::max<std::size_t>(1, spec.length / 2 - 1));
    seq[pos] = marker;
    seq[pos + 1] = needle_token;
  }
  seq[spec.length - 2] = marker;
  seq[spec.length - 1] = needle_token;
  return seq;
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kAssociativeRecall: return "associative_recall";
    case TaskKind::kNeedle: return "needle";
  }
  return "unknown";
}

TaskKind task_kind_from_string(std::string_view name) {
  if (name == "copy") return TaskKind::kCopy;
  if (name == "associative_recall") return TaskKind::kAssociativeRecall;
  if (name == "needle") return TaskKind::kNeedle;
  throw ConfigError("unknown task kind '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  const std::size_t min_vocab = kind == TaskKind::kNeedle ? 3 : 4;
  if (vocab < min_vocab)
    throw ConfigError("task " + std::string(to_string(kind)) + ": vocab must be >= " +
                      std::to_string(min_vocab));
  if (length < 2) throw ConfigError("task: sequence length must be >= 2");
}

Sequence generate(const TaskSpec& spec, std::uint64_t index) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  switch (spec.kind) {
    case TaskKind::kCopy: return copy(spec, rng);
    case TaskKind::kAssociativeRecall: return associative_recall(spec, rng);
    case TaskKind::kNeedle: return needle(spec, rng);
  }
  return {};
}

std::vector<Sequence> generate_batch(const TaskSpec& spec, std::uint64_t first,
                                     std::size_t count) {
  std::vector<Sequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate(spec, first + i));
  return out;
}

}  // namespace tnt::tasks
