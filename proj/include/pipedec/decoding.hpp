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

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pipedec/model.hpp"
#include "pipedec/schedule.hpp"

namespace pipedec {

// A token being appended to the decoder's packed prefix.
struct PackedToken {
  int token = 0;
  GridPosition pos;
  bool wants_logits = true;
};

// One forward step of a decoder over a growing packed prefix. Every call
// appends tokens in canonical order and returns next-token scores for them
// ([tokens.size(), vocab]; rows without wants_logits may be zero).
class StepDecoder {
 public:
  virtual ~StepDecoder() = default;
  virtual int vocab_size() const = 0;
  virtual void begin(std::span<const int> input_ids) = 0;
  virtual Tensor<float> step(std::span<const PackedToken> tokens, int delay) = 0;
};

// Model-backed decoder with a key/value cache.
template <typename T>
class CachedModelDecoder final : public StepDecoder {
 public:
  explicit CachedModelDecoder(const Seq2SeqModel<T>& model) : model_(&model) {}
  int vocab_size() const override { return model_->config().vocab_size; }
  void begin(std::span<const int> input_ids) override;
  Tensor<float> step(std::span<const PackedToken> tokens, int delay) override;

 private:
  const Seq2SeqModel<T>* model_;
  std::optional<IncrementalState<T>> state_;
};

// Recomputes decoder_forward over the whole prefix every step. Serves as the
// reference for the cached decoder.
template <typename T>
class FullRecomputeDecoder final : public StepDecoder {
 public:
  explicit FullRecomputeDecoder(const Seq2SeqModel<T>& model) : model_(&model) {}
  int vocab_size() const override { return model_->config().vocab_size; }
  void begin(std::span<const int> input_ids) override;
  Tensor<float> step(std::span<const PackedToken> tokens, int delay) override;

 private:
  const Seq2SeqModel<T>* model_;
  EncoderOutput<T> enc_;
  std::vector<int> tokens_;
  std::vector<GridPosition> positions_;
};

// Emits a fixed answer regardless of input. In grid mode, subsequence i
// produces targets[i-1] then <eos>, and every later subsequence produces
// <eos> at once. In flat mode, offset j of subsequence 1 produces
// flat[j+1] of build_sequential_target(targets).
class ForcedTokenDecoder final : public StepDecoder {
 public:
  enum class Mode { kGrid, kFlat };
  ForcedTokenDecoder(std::vector<std::vector<int>> targets, int vocab_size, Mode mode);
  int vocab_size() const override { return vocab_; }
  void begin(std::span<const int>) override {}
  Tensor<float> step(std::span<const PackedToken> tokens, int delay) override;

 private:
  std::vector<std::vector<int>> targets_;
  std::vector<int> flat_;
  int vocab_;
  Mode mode_;
};

enum class Termination { kAllComplete, kTimeMax, kSubMaxAssisted };
std::string termination_name(Termination t);

struct StepRecord {
  int step = 0;
  int emitted = 0;          // tokens appended this step, <eos> included
  int content_emitted = 0;  // emitted tokens that are not <eos>
  int active = 0;           // k after this step's establishment
  double seconds = 0;       // cumulative
};

struct GeneratedSubsequence {
  std::vector<int> tokens;  // framed: starts with <bos>
  bool complete = false;
};

// Loop state: subsequences G, their count k, the time-step t and the trace.
struct DecodeState {
  std::vector<GeneratedSubsequence> subsequences;
  int active = 0;
  int t = 0;
  std::vector<StepRecord> trace;
};

struct DecodeResult {
  std::vector<std::vector<int>> subsequences;  // framing removed, empties dropped
  int steps = 0;
  int emitted_tokens = 0;
  int established = 0;
  Termination termination = Termination::kAllComplete;
  std::vector<StepRecord> trace;
};

// Index of the highest score; ties go to the lowest id.
int greedy_token(std::span<const float> scores);

DecodeResult pipelined_decode(StepDecoder& decoder, std::span<const int> input_ids,
                              const PipelineSchedule& schedule);

struct SequentialResult {
  std::vector<int> tokens;  // <eos> excluded
  int steps = 0;
  bool finished = false;    // <eos> was produced
  std::vector<StepRecord> trace;
};

SequentialResult sequential_greedy(StepDecoder& decoder, std::span<const int> input_ids,
                                   int max_len);

// One JSON object per line: step, emitted, content_emitted, k, seconds.
void write_trace(std::ostream& os, std::span<const StepRecord> trace);

}  // namespace pipedec
