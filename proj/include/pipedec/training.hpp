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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipedec/model.hpp"
#include "pipedec/schedule.hpp"

namespace pipedec {

enum class Regime { kSequential, kPipelined };

std::string regime_name(Regime r);
Regime parse_regime(const std::string& s);

// Packed teacher-forcing target. For the pipelined regime `framed` holds the
// n framed subsequences plus the empty terminator; for the sequential regime
// it holds the single flat sequence.
struct TargetLayout {
  int delay = 1;
  std::vector<std::vector<int>> framed;
  std::vector<int> tokens;
  std::vector<GridPosition> positions;
  MaskMatrix mask;
  // Next token of the same subsequence, or -1 where nothing is predicted.
  std::vector<int> targets;
  std::vector<std::uint8_t> loss_mask;

  int length() const { return static_cast<int>(tokens.size()); }
  int predicting_positions() const;
};

// Frames each subsequence as [<bos>, tokens..., <eos>], appends the empty
// terminator [<bos>, <eos>], and packs all tokens by (timestep, subseq).
// With `exploration`, further empty subsequences follow the terminator: one
// for every subsequence the decode loop establishes while targets still run.
// Throws DataError on an empty subsequence.
TargetLayout build_training_target(const std::vector<std::vector<int>>& subsequences, int delay,
                                   bool exploration = false);

// Subsequences established by the decode loop, with forced target tokens and
// no cap, before all n targets finish. At least n + 1.
int established_before_completion(std::span<const int> lengths, int delay);

// <bos> Y1 <sep> Y2 ... <sep> Yn <eos>
std::vector<int> build_sequential_target(const std::vector<std::vector<int>>& subsequences,
                                         int sep_id);

// Single-subsequence layout with a causal mask over a flat target that
// starts with <bos> and ends with <eos>.
TargetLayout sequential_layout(std::span<const int> flat);

TargetLayout make_layout(const std::vector<std::vector<int>>& subsequences, Regime regime,
                         int delay, bool exploration = false);

// Mean negative log-likelihood over loss-masked positions.
template <typename T>
double compute_loss(const Tensor<T>& logits, const TargetLayout& layout);

// Token-id form of a dataset example.
struct EncodedExample {
  std::vector<int> input;
  std::vector<std::vector<int>> target;
};

struct TrainingBatch {
  EncoderBatch enc;
  DecoderBatch dec;
  std::vector<int> targets;
  std::vector<int> example_of_row;
  std::vector<int> predicting_per_example;
};

// Pads the layouts of the selected examples to a common length.
TrainingBatch make_batch(std::span<const EncodedExample> data, std::span<const int> indices,
                         Regime regime, int delay, int max_input_length,
                         bool exploration = false);

// Batched loss graph: the mean over examples of each example's mean token
// loss. Per-example losses are returned through `per_example` when non-null.
template <typename T>
Var batch_loss(Tape<T>& tape, Seq2SeqModel<T>& model, const TrainingBatch& batch,
               std::mt19937_64* dropout_rng, std::vector<double>* per_example = nullptr);

struct TrainConfig {
  Regime regime = Regime::kPipelined;
  int batch_size = 16;
  double lr = 3e-4;
  int epochs = 1;
  std::uint64_t seed = 1;
  int max_input_length = 256;
  int delay = 1;
  double weight_decay = 0.01;
  int warmup_steps = 100;
  // Learning rate decays linearly to lr * final_lr_ratio over the run.
  double final_lr_ratio = 0.1;
  double clip_norm = 1.0;
  // Pipelined only: also teach the exploratory subsequences to stop.
  bool exploration_targets = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);

  // Batch 24, lr 1e-4 with the full-size schedule.
  static TrainConfig paper_preset();
};

struct FitResult {
  std::vector<double> epoch_loss;
  std::int64_t steps = 0;
  double seconds = 0;
};

struct FitHooks {
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

// Runs teacher-forcing optimization. Deterministic for a given seed. Throws
// TrainingDivergence with the step index on a non-finite loss.
template <typename T>
FitResult fit(Seq2SeqModel<T>& model, std::span<const EncodedExample> data,
              const TrainConfig& config, const FitHooks& hooks = {});

// Format-versioned record of a training run.
nlohmann::json run_metadata(const TrainConfig& train, const ModelConfig& model,
                            const std::string& vocab_hash, const FitResult& result);

}  // namespace pipedec
