// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic token tasks. Sequence n of a task is a pure function of
// (seed, n), so training and evaluation streams can be regenerated anywhere.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tnt::tasks {

enum class TaskKind { kCopy, kAssociativeRecall, kNeedle };

std::string_view to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view name);

using Sequence = std::vector<std::size_t>;

struct TaskSpec {
  TaskKind kind = TaskKind::kAssociativeRecall;
  std::size_t vocab = 32;
  std::size_t length = 128;
  std::uint64_t seed = 0;

  // vocab >= 4 (copy, recall) or >= 3 (needle); length >= 2.
  void validate() const;
};

// associative_recall: alternating key/value tokens. Keys come from the lower
//   half of the vocabulary, values from the upper half. Each sequence draws a
//   small key set and a random key -> value map, so every repeated key is
//   followed by the value it was paired with earlier.
// copy: a pattern of length max(1, L/16) from the lower half, a distractor
//   block of length L/2 from the upper half, then the pattern repeated to the
//   end of the sequence.
// needle: filler tokens, a marker (vocab-1) followed by a needle token early
//   in the sequence, and the marker again at position L-2 so the last token
//   repeats the needle.
Sequence generate(const TaskSpec& spec, std::uint64_t index);
std::vector<Sequence> generate_batch(const TaskSpec& spec, std::uint64_t first,
                                     std::size_t count);

// Index ranges used for training and for held-out evaluation never overlap.
inline constexpr std::uint64_t kEvalOffset = std::uint64_t{1} << 40;

}  // namespace tnt::tasks
