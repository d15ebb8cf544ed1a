// Copyright 2026 The pipedec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipedec/training.hpp"
#include "pipedec/vocab.hpp"

namespace pipedec {

using Tokens = std::vector<std::string>;

struct Example {
  Tokens input;
  std::vector<Tokens> target;
  std::string task;

  friend bool operator==(const Example&, const Example&) = default;
};

struct IntRange {
  int min = 1;
  int max = 1;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

// Parameters of a synthetic task. For span-copy, `context_length` counts
// distractor words; for sentence-copy it counts distractor sentences and
// `span_length` is the sentence length in words (period excluded).
struct SyntheticSpec {
  std::string task = "span-copy";
  std::uint64_t seed = 1;
  int count = 1000;
  int vocab_size = 100;
  IntRange span_count{2, 6};
  IntRange span_length{3, 5};
  IntRange context_length{8, 16};
  // Probability that a distractor word repeats a word of some span.
  double distractor_rate = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
  static SyntheticSpec load(const std::filesystem::path& path);
};

inline constexpr const char* kSpanClose = "</span>";
std::string span_marker(int index);
std::string content_word(int index);

// Input: distractors with spans written as <spanK> w.. </span>; the target
// is the spans in input order. Span words are distinct within an example.
// Throws SpecError when spans cannot fit the content vocabulary.
std::vector<Example> gen_span_copy(const SyntheticSpec& spec);

// Input: sentences ending in "."; the selected ones carry a <spanK> marker.
// The target is the selected sentences, period included.
std::vector<Example> gen_sentence_copy(const SyntheticSpec& spec);

// Dispatches on spec.task.
std::vector<Example> generate(const SyntheticSpec& spec);

Tokens tokenize(const std::string& text);
std::string join(std::span<const std::string> tokens);

std::vector<std::vector<int>> split_on_separator(std::span<const int> tokens, int sep_id);

nlohmann::json example_to_json(const Example& e);
// Throws DataError on a malformed or invariant-violating record.
Example example_from_json(const nlohmann::json& j);

std::vector<Example> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path, std::span<const Example> data);

Vocab build_vocab(std::span<const Example> data, int min_count = 1);
std::vector<EncodedExample> encode_dataset(std::span<const Example> data, const Vocab& vocab);

}  // namespace pipedec
