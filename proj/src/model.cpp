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

#include "pipedec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "pipedec/simd.hpp"

namespace pipedec {

// ---------------------------------------------------------------------------
// Config and buckets

void ModelConfig::validate() const {
  if (num_layers < 1 || num_heads < 1 || model_dim < 1 || ff_dim < 1 || vocab_size < 1 ||
      num_buckets < 2 || max_distance < 1) {
    throw ContractError("model config dimensions must be positive");
  }
  if (model_dim % num_heads != 0) {
    throw ContractError("model_dim " + std::to_string(model_dim) +
                        " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"num_layers", num_layers},   {"num_heads", num_heads},
          {"model_dim", model_dim},     {"ff_dim", ff_dim},
          {"vocab_size", vocab_size},   {"num_buckets", num_buckets},
          {"max_distance", max_distance}, {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.num_buckets = j.value("num_buckets", c.num_buckets);
  c.max_distance = j.value("max_distance", c.max_distance);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

int unidirectional_bucket(int distance, int num_buckets, int max_distance) {
  distance = std::abs(distance);
  const int max_exact = num_buckets / 2;
  if (distance < max_exact) return distance;
  if (max_distance <= max_exact) return num_buckets - 1;
  const double ratio = std::log(static_cast<double>(distance) / max_exact) /
                       std::log(static_cast<double>(max_distance) / max_exact);
  const int bucket = max_exact + static_cast<int>(ratio * (num_buckets - max_exact));
  return std::min(bucket, num_buckets - 1);
}

int bidirectional_bucket(int relative, int num_buckets, int max_distance) {
  const int half = num_buckets / 2;
  const int base = relative > 0 ? half : 0;
  return base + unidirectional_bucket(relative, half, max_distance);
}

EncoderBatch EncoderBatch::single(std::span<const int> ids) {
  EncoderBatch b;
  b.batch = 1;
  b.length = static_cast<int>(ids.size());
  b.ids.assign(ids.begin(), ids.end());
  b.valid.assign(ids.size(), 1);
  return b;
}

// ---------------------------------------------------------------------------
// Construction

template <typename T>
Seq2SeqModel<T>::Seq2SeqModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  build_layout(&rng);
}

template <typename T>
int Seq2SeqModel<T>::add_param(const std::string& name, Shape shape, std::mt19937_64* rng,
                               double stddev, double fill) {
  Tensor<T> value(std::move(shape), static_cast<T>(fill));
  if (rng && stddev > 0) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : value.values()) v = static_cast<T>(dist(*rng));
  }
  params_.emplace_back(name, std::move(value));
  return static_cast<int>(params_.size() - 1);
}

template <typename T>
void Seq2SeqModel<T>::build_layout(std::mt19937_64* rng) {
  const int d = config_.model_dim;
  const int f = config_.ff_dim;
  const int v = config_.vocab_size;
  const int h = config_.num_heads;
  const int nb = config_.num_buckets;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  params_.clear();
  params_.reserve(8 + static_cast<std::size_t>(config_.num_layers) * 24);

  auto attn = [&](const std::string& prefix) {
    return AttnIdx{add_param(prefix + ".q", {d, d}, rng, sd),
                   add_param(prefix + ".k", {d, d}, rng, sd),
                   add_param(prefix + ".v", {d, d}, rng, sd),
                   add_param(prefix + ".o", {d, d}, rng, sd)};
  };

  embed_ = add_param("embed", {v, d}, rng, 1.0);
  enc_bias_ = add_param("enc.rel_bias", {h, nb}, rng, 0.1);
  enc_layers_.clear();
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    EncLayer layer{};
    layer.attn_norm = add_param(p + ".attn_norm", {d}, nullptr, 0, 1.0);
    layer.attn = attn(p + ".attn");
    layer.ff_norm = add_param(p + ".ff_norm", {d}, nullptr, 0, 1.0);
    layer.ff_in = add_param(p + ".ff_in", {d, f}, rng, sd);
    layer.ff_out = add_param(p + ".ff_out", {f, d}, rng, sf);
    enc_layers_.push_back(layer);
  }
  enc_final_norm_ = add_param("enc.final_norm", {d}, nullptr, 0, 1.0);

  dec_bias_ = add_param("dec.rel_bias", {h, nb}, rng, 0.1);
  dec_layers_.clear();
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecLayer layer{};
    layer.self_norm = add_param(p + ".self_norm", {d}, nullptr, 0, 1.0);
    layer.self = attn(p + ".self");
    layer.cross_norm = add_param(p + ".cross_norm", {d}, nullptr, 0, 1.0);
    layer.cross = attn(p + ".cross");
    layer.ff_norm = add_param(p + ".ff_norm", {d}, nullptr, 0, 1.0);
    layer.ff_in = add_param(p + ".ff_in", {d, f}, rng, sd);
    layer.ff_out = add_param(p + ".ff_out", {f, d}, rng, sf);
    dec_layers_.push_back(layer);
  }
  dec_final_norm_ = add_param("dec.final_norm", {d}, nullptr, 0, 1.0);
  lm_head_ = add_param("lm_head", {d, v}, rng, sd);
}

template <typename T>
std::vector<Parameter<T>*> Seq2SeqModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Seq2SeqModel<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
Parameter<T>& Seq2SeqModel<T>::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractError("no parameter named " + name);
}

template <typename T>
std::size_t Seq2SeqModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Seq2SeqModel<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void Seq2SeqModel<T>::save(const std::filesystem::path& path, nlohmann::json extra) const {
  if (extra.is_null()) extra = nlohmann::json::object();
  extra["model"] = config_.to_json();
  save_checkpoint<T>(path, parameters(), extra);
}

template <typename T>
Seq2SeqModel<T> Seq2SeqModel<T>::load(const std::filesystem::path& path) {
  return from_checkpoint(load_checkpoint<T>(path));
}

template <typename T>
Seq2SeqModel<T> Seq2SeqModel<T>::from_checkpoint(const Checkpoint<T>& ckpt) {
  if (!ckpt.meta.contains("model")) throw CheckpointError("checkpoint has no model header");
  Seq2SeqModel<T> m;
  m.config_ = ModelConfig::from_json(ckpt.meta.at("model"));
  m.config_.validate();
  m.build_layout(nullptr);
  for (auto& p : m.params_) {
    const Parameter<T>* src = ckpt.find(p.name);
    if (!src) throw CheckpointError("checkpoint is missing parameter " + p.name);
    if (src->value.shape() != p.value.shape()) {
      throw CheckpointError("parameter " + p.name + " has shape " +
                            shape_str(src->value.shape()) + ", expected " +
                            shape_str(p.value.shape()));
    }
    p.value = src->value;
    p.grad = Tensor<T>(p.value.shape());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Graph construction

template <typename T>
std::vector<Var> Seq2SeqModel<T>::bind(Tape<T>& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) {
    if (tape.recording()) {
      // Training is the single writer of the weights; gradients accumulate
      // into the parameter's grad buffer.
      vars.push_back(tape.parameter(const_cast<Parameter<T>&>(p)));
    } else {
      vars.push_back(tape.constant_ref(p.value));
    }
  }
  return vars;
}

template <typename T>
void Seq2SeqModel<T>::check_ids(std::span<const int> ids) const {
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw EncodingError("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(config_.vocab_size));
    }
  }
}

template <typename T>
Var Seq2SeqModel<T>::attention_block(Tape<T>& tape, const std::vector<Var>& p, Var x,
                                     Var kv_source, const AttnIdx& idx,
                                     std::shared_ptr<const AttentionLayout> layout, Var bias,
                                     std::mt19937_64* rng) const {
  const Var q = ops::matmul(tape, x, p[idx.q]);
  const Var src = kv_source.valid() ? kv_source : x;
  const Var k = ops::matmul(tape, src, p[idx.k]);
  const Var v = ops::matmul(tape, src, p[idx.v]);
  const Var a = ops::attention(tape, q, k, v, std::move(layout), bias);
  Var o = ops::matmul(tape, a, p[idx.o]);
  if (rng) o = ops::dropout(tape, o, static_cast<T>(config_.dropout), *rng);
  return o;
}

template <typename T>
Var Seq2SeqModel<T>::feedforward_block(Tape<T>& tape, const std::vector<Var>& p, Var x,
                                       int norm, int ff_in, int ff_out,
                                       std::mt19937_64* rng) const {
  const Var h = ops::rmsnorm(tape, x, p[norm]);
  const Var inner = ops::relu(tape, ops::matmul(tape, h, p[ff_in]));
  Var o = ops::matmul(tape, inner, p[ff_out]);
  if (rng) o = ops::dropout(tape, o, static_cast<T>(config_.dropout), *rng);
  return ops::add(tape, x, o);
}

template <typename T>
Var Seq2SeqModel<T>::encode_graph(Tape<T>& tape, const std::vector<Var>& p,
                                  const EncoderBatch& enc, std::mt19937_64* rng) const {
  const int S = enc.length;
  auto layout = std::make_shared<AttentionLayout>();
  layout->batch = enc.batch;
  layout->query_len = S;
  layout->key_len = S;
  layout->heads = config_.num_heads;
  layout->query_valid = enc.valid;
  const std::size_t cells = static_cast<std::size_t>(enc.batch) * S * S;
  layout->mask.resize(cells);
  layout->bucket.resize(cells);
  for (int b = 0; b < enc.batch; ++b) {
    for (int i = 0; i < S; ++i) {
      for (int j = 0; j < S; ++j) {
        const std::size_t c = (static_cast<std::size_t>(b) * S + i) * S + j;
        layout->mask[c] = enc.valid[static_cast<std::size_t>(b) * S + j];
        layout->bucket[c] = bidirectional_bucket(j - i, config_.num_buckets, config_.max_distance);
      }
    }
  }
  std::shared_ptr<const AttentionLayout> shared = layout;

  Var x = ops::embedding(tape, p[embed_], enc.ids);
  if (rng) x = ops::dropout(tape, x, static_cast<T>(config_.dropout), *rng);
  for (const EncLayer& layer : enc_layers_) {
    const Var h = ops::rmsnorm(tape, x, p[layer.attn_norm]);
    x = ops::add(tape, x, attention_block(tape, p, h, Var{}, layer.attn, shared, p[enc_bias_], rng));
    x = feedforward_block(tape, p, x, layer.ff_norm, layer.ff_in, layer.ff_out, rng);
  }
  return ops::rmsnorm(tape, x, p[enc_final_norm_]);
}

template <typename T>
Var Seq2SeqModel<T>::decode_graph(Tape<T>& tape, const std::vector<Var>& p, Var enc_hidden,
                                  const EncoderBatch& enc, const DecoderBatch& dec,
                                  std::mt19937_64* rng) const {
  const int L = dec.length;
  const int S = enc.length;
  if (dec.batch != enc.batch) throw ContractError("encoder/decoder batch sizes differ");
  const std::size_t self_cells = static_cast<std::size_t>(dec.batch) * L * L;
  if (dec.ids.size() != static_cast<std::size_t>(dec.batch) * L ||
      dec.positions.size() != dec.ids.size() || dec.valid.size() != dec.ids.size() ||
      dec.mask.size() != self_cells) {
    throw ContractError("decoder batch tables disagree with batch x length");
  }

  auto self_layout = std::make_shared<AttentionLayout>();
  self_layout->batch = dec.batch;
  self_layout->query_len = L;
  self_layout->key_len = L;
  self_layout->heads = config_.num_heads;
  self_layout->query_valid = dec.valid;
  self_layout->mask = dec.mask;
  self_layout->bucket.resize(self_cells);
  for (int b = 0; b < dec.batch; ++b) {
    for (int i = 0; i < L; ++i) {
      const std::size_t qi = static_cast<std::size_t>(b) * L + i;
      for (int j = 0; j < L; ++j) {
        const std::size_t kj = static_cast<std::size_t>(b) * L + j;
        const std::size_t c = qi * L + j;
        if (!dec.valid[kj]) self_layout->mask[c] = 0;
        self_layout->bucket[c] =
            dec.valid[qi] && dec.valid[kj]
                ? unidirectional_bucket(
                      manhattan_distance(dec.positions[qi], dec.positions[kj], dec.delay),
                      config_.num_buckets, config_.max_distance)
                : 0;
      }
    }
  }

  auto cross_layout = std::make_shared<AttentionLayout>();
  cross_layout->batch = dec.batch;
  cross_layout->query_len = L;
  cross_layout->key_len = S;
  cross_layout->heads = config_.num_heads;
  cross_layout->query_valid = dec.valid;
  cross_layout->mask.resize(static_cast<std::size_t>(dec.batch) * L * S);
  for (int b = 0; b < dec.batch; ++b)
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < S; ++j)
        cross_layout->mask[(static_cast<std::size_t>(b) * L + i) * S + j] =
            enc.valid[static_cast<std::size_t>(b) * S + j];

  std::shared_ptr<const AttentionLayout> self_shared = self_layout;
  std::shared_ptr<const AttentionLayout> cross_shared = cross_layout;

  Var x = ops::embedding(tape, p[embed_], dec.ids);
  if (rng) x = ops::dropout(tape, x, static_cast<T>(config_.dropout), *rng);
  for (const DecLayer& layer : dec_layers_) {
    Var h = ops::rmsnorm(tape, x, p[layer.self_norm]);
    x = ops::add(tape, x, attention_block(tape, p, h, Var{}, layer.self, self_shared, p[dec_bias_], rng));
    h = ops::rmsnorm(tape, x, p[layer.cross_norm]);
    x = ops::add(tape, x, attention_block(tape, p, h, enc_hidden, layer.cross, cross_shared, Var{}, rng));
    x = feedforward_block(tape, p, x, layer.ff_norm, layer.ff_in, layer.ff_out, rng);
  }
  const Var h = ops::rmsnorm(tape, x, p[dec_final_norm_]);
  return ops::matmul(tape, h, p[lm_head_]);
}

template <typename T>
Var Seq2SeqModel<T>::forward(Tape<T>& tape, const EncoderBatch& enc, const DecoderBatch& dec,
                             std::mt19937_64* dropout_rng) {
  check_ids(enc.ids);
  check_ids(dec.ids);
  const std::vector<Var> p = bind(tape);
  const Var hidden = encode_graph(tape, p, enc, dropout_rng);
  return decode_graph(tape, p, hidden, enc, dec, dropout_rng);
}

template <typename T>
EncoderOutput<T> Seq2SeqModel<T>::encode(std::span<const int> input_ids) const {
  if (input_ids.empty()) throw EncodingError("encoder input is empty");
  check_ids(input_ids);
  Tape<T> tape(false);
  const std::vector<Var> p = bind(tape);
  const Var out = encode_graph(tape, p, EncoderBatch::single(input_ids), nullptr);
  return EncoderOutput<T>{tape.value(out)};
}

template <typename T>
Tensor<T> Seq2SeqModel<T>::decoder_forward(std::span<const int> token_ids,
                                           std::span<const GridPosition> positions,
                                           const MaskMatrix& mask,
                                           const EncoderOutput<T>& enc, int delay) const {
  const std::size_t n = token_ids.size();
  if (positions.size() != n || static_cast<std::size_t>(mask.size()) != n) {
    throw ContractError("decoder_forward: " + std::to_string(n) + " tokens, " +
                        std::to_string(positions.size()) + " positions, mask of size " +
                        std::to_string(mask.size()));
  }
  if (enc.hidden.cols() != config_.model_dim || enc.length() < 1) {
    throw ContractError("decoder_forward: encoder output has shape " +
                        shape_str(enc.hidden.shape()));
  }
  check_ids(token_ids);
  Tape<T> tape(false);
  const std::vector<Var> p = bind(tape);
  EncoderBatch eb;
  eb.batch = 1;
  eb.length = enc.length();
  eb.ids.assign(static_cast<std::size_t>(eb.length), 0);
  eb.valid.assign(static_cast<std::size_t>(eb.length), 1);
  DecoderBatch db;
  db.batch = 1;
  db.length = static_cast<int>(n);
  db.delay = delay;
  db.ids.assign(token_ids.begin(), token_ids.end());
  db.positions.assign(positions.begin(), positions.end());
  db.valid.assign(n, 1);
  db.mask.assign(mask.bits().begin(), mask.bits().end());
  const Var hidden = tape.constant_ref(enc.hidden);
  const Var logits = decode_graph(tape, p, hidden, eb, db, nullptr);
  return tape.value(logits);
}

template <typename T>
std::vector<int> Seq2SeqModel<T>::relative_buckets(std::span<const GridPosition> positions,
                                                   int delay) const {
  const std::size_t n = positions.size();
  std::vector<int> out(n * n);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < n; ++k)
      out[q * n + k] = unidirectional_bucket(manhattan_distance(positions[q], positions[k], delay),
                                             config_.num_buckets, config_.max_distance);
  return out;
}

template <typename T>
Tensor<T> Seq2SeqModel<T>::relative_bias(std::span<const GridPosition> positions,
                                         int delay) const {
  const int n = static_cast<int>(positions.size());
  const std::vector<int> buckets = relative_buckets(positions, delay);
  const Tensor<T>& table = params_[static_cast<std::size_t>(dec_bias_)].value;
  Tensor<T> out({config_.num_heads, n, n});
  for (int h = 0; h < config_.num_heads; ++h)
    for (std::size_t c = 0; c < buckets.size(); ++c)
      out[static_cast<std::size_t>(h) * n * n + c] = table.at(h, buckets[c]);
  return out;
}

template <typename T>
IncrementalState<T> Seq2SeqModel<T>::start_incremental(const EncoderOutput<T>& enc) const {
  if (enc.hidden.cols() != config_.model_dim || enc.length() < 1) {
    throw ContractError("start_incremental: encoder output has shape " +
                        shape_str(enc.hidden.shape()));
  }
  IncrementalState<T> state(*this);
  const int S = enc.length();
  const int d = config_.model_dim;
  state.enc_len_ = S;
  const int heads = config_.num_heads;
  const int hd = d / heads;
  Tensor<T> k({S, d});
  Tensor<T> v({S, d});
  for (const DecLayer& layer : dec_layers_) {
    kernels::matmul(enc.hidden.data(), params_[layer.cross.k].value.data(), k.data(), S, d, d);
    kernels::matmul(enc.hidden.data(), params_[layer.cross.v].value.data(), v.data(), S, d, d);
    Tensor<T> kt({heads, hd, S});
    Tensor<T> vh({heads, S, hd});
    for (int s = 0; s < S; ++s) {
      for (int c = 0; c < d; ++c) {
        const std::size_t h = static_cast<std::size_t>(c / hd);
        const std::size_t e = static_cast<std::size_t>(c % hd);
        kt[(h * hd + e) * S + s] = k.at(s, c);
        vh[(h * S + s) * hd + e] = v.at(s, c);
      }
    }
    state.cross_k_.push_back(std::move(kt));
    state.cross_v_.push_back(std::move(vh));
    state.self_k_.emplace_back();
    state.self_v_.emplace_back();
  }
  return state;
}

// ---------------------------------------------------------------------------
// Incremental decoding

template <typename T>
Tensor<T> IncrementalState<T>::step(std::span<const int> token_ids,
                                    std::span<const GridPosition> positions, int delay,
                                    std::span<const std::uint8_t> want_logits) {
  const Seq2SeqModel<T>& m = *model_;
  const ModelConfig& cfg = m.config_;
  const int n = static_cast<int>(token_ids.size());
  const int d = cfg.model_dim;
  const int heads = cfg.num_heads;
  const int hd = d / heads;
  const int vocab = cfg.vocab_size;
  if (positions.size() != token_ids.size() ||
      (!want_logits.empty() && want_logits.size() != token_ids.size())) {
    throw ContractError("incremental step: token/position/flag counts differ");
  }
  m.check_ids(token_ids);

  // Validate that the new positions continue the cached grid before
  // touching any state.
  std::vector<int> next = next_offset_;
  for (int r = 0; r < n; ++r) {
    const GridPosition p = positions[r];
    const GridPosition* prev = r > 0 ? &positions[r - 1]
                                     : (positions_.empty() ? nullptr : &positions_.back());
    if (prev && !(std::make_pair(timestep_of(*prev, delay), prev->subseq) <
                  std::make_pair(timestep_of(p, delay), p.subseq))) {
      throw ConsistencyError("incremental step: position (" + std::to_string(p.subseq) + "," +
                             std::to_string(p.offset) + ") breaks canonical order");
    }
    const int idx = p.subseq - 1;
    if (idx == static_cast<int>(next.size()) && p.offset == 0) {
      next.push_back(1);
    } else if (idx >= 0 && idx < static_cast<int>(next.size()) && next[idx] == p.offset) {
      ++next[idx];
    } else {
      throw ConsistencyError("incremental step: position (" + std::to_string(p.subseq) + "," +
                             std::to_string(p.offset) + ") does not continue the cache");
    }
  }
  next_offset_ = std::move(next);
  positions_.insert(positions_.end(), positions.begin(), positions.end());

  const int total = static_cast<int>(positions_.size());
  const int old = total - n;
  std::vector<int> ts(static_cast<std::size_t>(total));
  for (int c = 0; c < total; ++c) ts[c] = timestep_of(positions_[c], delay);

  const Tensor<T>& embed = m.params_[m.embed_].value;
  Tensor<T> x({n, d});
  for (int r = 0; r < n; ++r) {
    std::copy_n(embed.data() + static_cast<std::size_t>(token_ids[r]) * d, d,
                x.data() + static_cast<std::size_t>(r) * d);
  }

  // Masks and bias buckets for the new query rows.
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * total);
  std::vector<int> bucket(static_cast<std::size_t>(n) * total);
  for (int r = 0; r < n; ++r) {
    const GridPosition qp = positions_[old + r];
    for (int c = 0; c < total; ++c) {
      const std::size_t cell = static_cast<std::size_t>(r) * total + c;
      mask[cell] = positions_[c].subseq <= qp.subseq && ts[c] <= ts[old + r];
      bucket[cell] = unidirectional_bucket(manhattan_distance(qp, positions_[c], delay),
                                           cfg.num_buckets, cfg.max_distance);
    }
  }
  const std::vector<std::uint8_t> cross_mask(static_cast<std::size_t>(enc_len_), 1);
  const Tensor<T>& bias_table = m.params_[m.dec_bias_].value;
  const T scl = T{1} / std::sqrt(static_cast<T>(hd));

  Tensor<T> h({n, d}), q({n, d}), kk({n, d}), vv({n, d}), att({n, d}), o({n, d});
  Tensor<T> inner({n, cfg.ff_dim});
  std::vector<T> probs(static_cast<std::size_t>(std::max(total, enc_len_)));
  std::vector<T> bias_row(static_cast<std::size_t>(total));
  const int S = enc_len_;
  std::vector<T> head_q(static_cast<std::size_t>(n) * hd);
  std::vector<T> head_out(static_cast<std::size_t>(n) * hd);
  std::vector<T> scores(static_cast<std::size_t>(n) * S);
  // Rows still computed, as indices into the step's tokens. The last layer
  // keeps only rows that want logits once their keys and values are cached.
  std::vector<int> live(static_cast<std::size_t>(n));
  std::iota(live.begin(), live.end(), 0);
  int rows = n;
  auto residual = [&](const Tensor<T>& delta) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * d; ++i) x[i] += delta[i];
  };
  auto W = [&](int idx) { return m.params_[static_cast<std::size_t>(idx)].value.data(); };

  for (std::size_t l = 0; l < m.dec_layers_.size(); ++l) {
    const auto& layer = m.dec_layers_[l];
    // Self-attention over the cache.
    kernels::rmsnorm_rows(x.data(), W(layer.self_norm), h.data(), n, d, T(1e-6));
    kernels::matmul(h.data(), W(layer.self.q), q.data(), n, d, d);
    kernels::matmul(h.data(), W(layer.self.k), kk.data(), n, d, d);
    kernels::matmul(h.data(), W(layer.self.v), vv.data(), n, d, d);
    self_k_[l].insert(self_k_[l].end(), kk.values().begin(), kk.values().end());
    self_v_[l].insert(self_v_[l].end(), vv.values().begin(), vv.values().end());
    if (l + 1 == m.dec_layers_.size() && !want_logits.empty()) {
      rows = 0;
      for (int r = 0; r < n; ++r) {
        if (!want_logits[r]) continue;
        std::copy_n(x.data() + static_cast<std::size_t>(r) * d, d,
                    x.data() + static_cast<std::size_t>(rows) * d);
        std::copy_n(q.data() + static_cast<std::size_t>(r) * d, d,
                    q.data() + static_cast<std::size_t>(rows) * d);
        live[static_cast<std::size_t>(rows++)] = r;
      }
      if (rows == 0) break;
    }
    for (int r = 0; r < rows; ++r) {
      const std::size_t cell = static_cast<std::size_t>(live[r]) * total;
      for (int hh = 0; hh < heads; ++hh) {
        for (int c = 0; c < total; ++c) bias_row[c] = bias_table.at(hh, bucket[cell + c]);
        kernels::attend_row(q.data() + static_cast<std::size_t>(r) * d + hh * hd,
                            self_k_[l].data() + hh * hd, self_v_[l].data() + hh * hd,
                            static_cast<std::size_t>(d), total, hd, mask.data() + cell,
                            bias_row.data(), scl, probs.data(),
                            att.data() + static_cast<std::size_t>(r) * d + hh * hd);
      }
    }
    kernels::matmul(att.data(), W(layer.self.o), o.data(), rows, d, d);
    residual(o);

    // Cross-attention over the encoder states, all rows of a head at once.
    kernels::rmsnorm_rows(x.data(), W(layer.cross_norm), h.data(), rows, d, T(1e-6));
    kernels::matmul(h.data(), W(layer.cross.q), q.data(), rows, d, d);
    for (int hh = 0; hh < heads; ++hh) {
      for (int r = 0; r < rows; ++r) {
        std::copy_n(q.data() + static_cast<std::size_t>(r) * d + hh * hd, hd,
                    head_q.data() + static_cast<std::size_t>(r) * hd);
      }
      kernels::matmul(head_q.data(), cross_k_[l].data() + static_cast<std::size_t>(hh) * hd * S,
                      scores.data(), rows, hd, S);
      for (int r = 0; r < rows; ++r) {
        T* row = scores.data() + static_cast<std::size_t>(r) * S;
        for (int c = 0; c < S; ++c) row[c] *= scl;
        kernels::masked_softmax_row(row, cross_mask.data(), S);
      }
      kernels::matmul(scores.data(), cross_v_[l].data() + static_cast<std::size_t>(hh) * S * hd,
                      head_out.data(), rows, S, hd);
      for (int r = 0; r < rows; ++r) {
        std::copy_n(head_out.data() + static_cast<std::size_t>(r) * hd, hd,
                    att.data() + static_cast<std::size_t>(r) * d + hh * hd);
      }
    }
    kernels::matmul(att.data(), W(layer.cross.o), o.data(), rows, d, d);
    residual(o);

    // Feed-forward.
    kernels::rmsnorm_rows(x.data(), W(layer.ff_norm), h.data(), rows, d, T(1e-6));
    kernels::matmul(h.data(), W(layer.ff_in), inner.data(), rows, d, cfg.ff_dim);
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cfg.ff_dim; ++i) {
      inner[i] = inner[i] > T{0} ? inner[i] : T{0};
    }
    kernels::matmul(inner.data(), W(layer.ff_out), o.data(), rows, cfg.ff_dim, d);
    residual(o);
  }

  Tensor<T> logits({n, vocab});
  if (rows > 0) {
    kernels::rmsnorm_rows(x.data(), W(m.dec_final_norm_), h.data(), rows, d, T(1e-6));
    Tensor<T> out({rows, vocab});
    kernels::matmul(h.data(), W(m.lm_head_), out.data(), rows, d, vocab);
    for (int i = 0; i < rows; ++i) {
      std::copy_n(out.data() + static_cast<std::size_t>(i) * vocab, vocab,
                  logits.data() + static_cast<std::size_t>(live[i]) * vocab);
    }
  }
  return logits;
}

template class Seq2SeqModel<float>;
template class Seq2SeqModel<double>;
template class IncrementalState<float>;
template class IncrementalState<double>;

}  // namespace pipedec
