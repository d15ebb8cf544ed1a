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

// Encoder-decoder transformer. The decoder's self-attention takes its mask
// and grid positions from the caller, so one set of weights serves both the
// sequential and the pipelined regimes.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipedec/checkpoint.hpp"
#include "pipedec/schedule.hpp"
#include "pipedec/tape.hpp"
#include "pipedec/tensor.hpp"

namespace pipedec {

struct ModelConfig {
  int num_layers = 2;
  int num_heads = 4;
  int model_dim = 64;
  int ff_dim = 256;
  int vocab_size = 0;
  int num_buckets = 32;
  int max_distance = 128;
  double dropout = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Bucket of an unsigned distance: exact below num_buckets/2, logarithmic up
// to max_distance, then saturated at num_buckets-1.
int unidirectional_bucket(int distance, int num_buckets, int max_distance);
// Signed 1-D offset (key - query): half of the buckets per direction.
int bidirectional_bucket(int relative, int num_buckets, int max_distance);

template <typename T>
struct EncoderOutput {
  Tensor<T> hidden;  // [l, d]
  int length() const { return hidden.rows(); }
};

// Encoder inputs of a batch, right-padded to a common length.
struct EncoderBatch {
  int batch = 0;
  int length = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> valid;

  static EncoderBatch single(std::span<const int> ids);
};

// Packed decoder inputs of a batch, right-padded. mask is batch x length x
// length; padded slots are excluded as queries and never visible as keys.
struct DecoderBatch {
  int batch = 0;
  int length = 0;
  int delay = 1;
  std::vector<int> ids;
  std::vector<GridPosition> positions;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> mask;
};

template <typename T>
class IncrementalState;

template <typename T>
class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  Parameter<T>& parameter(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

  // Checkpoint with a model header ("model" config plus caller fields).
  void save(const std::filesystem::path& path, nlohmann::json extra = {}) const;
  static Seq2SeqModel load(const std::filesystem::path& path);
  static Seq2SeqModel from_checkpoint(const Checkpoint<T>& ckpt);

  // Batched graph for training: returns logits [batch*length, vocab]. A
  // non-null rng enables dropout.
  Var forward(Tape<T>& tape, const EncoderBatch& enc, const DecoderBatch& dec,
              std::mt19937_64* dropout_rng);

  // Inference entry points; safe to call concurrently.
  EncoderOutput<T> encode(std::span<const int> input_ids) const;
  Tensor<T> decoder_forward(std::span<const int> token_ids,
                            std::span<const GridPosition> positions,
                            const MaskMatrix& mask, const EncoderOutput<T>& enc,
                            int delay) const;
  // Per-head additive bias [heads, n, n] for decoder self-attention.
  Tensor<T> relative_bias(std::span<const GridPosition> positions, int delay) const;
  std::vector<int> relative_buckets(std::span<const GridPosition> positions, int delay) const;

  IncrementalState<T> start_incremental(const EncoderOutput<T>& enc) const;

 private:
  friend class IncrementalState<T>;

  struct AttnIdx {
    int q, k, v, o;
  };
  struct EncLayer {
    int attn_norm;
    AttnIdx attn;
    int ff_norm, ff_in, ff_out;
  };
  struct DecLayer {
    int self_norm;
    AttnIdx self;
    int cross_norm;
    AttnIdx cross;
    int ff_norm, ff_in, ff_out;
  };

  Seq2SeqModel() = default;
  void build_layout(std::mt19937_64* init_rng);
  int add_param(const std::string& name, Shape shape, std::mt19937_64* rng, double stddev,
                double fill = 0.0);

  std::vector<Var> bind(Tape<T>& tape) const;
  Var encode_graph(Tape<T>& tape, const std::vector<Var>& p, const EncoderBatch& enc,
                   std::mt19937_64* rng) const;
  Var decode_graph(Tape<T>& tape, const std::vector<Var>& p, Var enc_hidden,
                   const EncoderBatch& enc, const DecoderBatch& dec,
                   std::mt19937_64* rng) const;
  Var attention_block(Tape<T>& tape, const std::vector<Var>& p, Var x, Var kv_source,
                      const AttnIdx& idx, std::shared_ptr<const AttentionLayout> layout,
                      Var bias, std::mt19937_64* rng) const;
  Var feedforward_block(Tape<T>& tape, const std::vector<Var>& p, Var x, int norm,
                        int ff_in, int ff_out, std::mt19937_64* rng) const;
  void check_ids(std::span<const int> ids) const;

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  int embed_ = -1;
  int enc_bias_ = -1;
  int enc_final_norm_ = -1;
  int dec_bias_ = -1;
  int dec_final_norm_ = -1;
  int lm_head_ = -1;
  std::vector<EncLayer> enc_layers_;
  std::vector<DecLayer> dec_layers_;
};

// Key/value cache for step-wise decoding. Positions must arrive in canonical
// (timestep, subseq) order, each continuing its subsequence by one offset or
// opening the next subsequence at offset 0.
template <typename T>
class IncrementalState {
 public:
  // Appends the new positions and returns logits [n_new, vocab]. Rows whose
  // want_logits flag is 0 are left zero. Throws ConsistencyError when the
  // positions do not continue the cached prefix.
  Tensor<T> step(std::span<const int> token_ids, std::span<const GridPosition> positions,
                 int delay, std::span<const std::uint8_t> want_logits = {});

  int cached() const { return static_cast<int>(positions_.size()); }
  std::span<const GridPosition> positions() const { return positions_; }

 private:
  friend class Seq2SeqModel<T>;
  explicit IncrementalState(const Seq2SeqModel<T>& model) : model_(&model) {}

  const Seq2SeqModel<T>* model_;
  int enc_len_ = 0;
  // Per layer, head-major: keys transposed to [heads, head_dim, S] and
  // values as [heads, S, head_dim], so a step attends with two products.
  std::vector<Tensor<T>> cross_k_, cross_v_;
  std::vector<std::vector<T>> self_k_, self_v_;
  std::vector<GridPosition> positions_;
  std::vector<int> next_offset_;  // per subsequence (0-based index)
};

}  // namespace pipedec
