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

#include "pipedec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "pipedec/optim.hpp"
#include "pipedec/vocab.hpp"

namespace pipedec {

std::string regime_name(Regime r) {
  return r == Regime::kSequential ? "sequential" : "pipelined";
}

Regime parse_regime(const std::string& s) {
  if (s == "sequential") return Regime::kSequential;
  if (s == "pipelined") return Regime::kPipelined;
  throw ConfigError("unknown regime '" + s + "' (expected sequential or pipelined)");
}

int TargetLayout::predicting_positions() const {
  return static_cast<int>(std::count(loss_mask.begin(), loss_mask.end(), std::uint8_t{1}));
}

int established_before_completion(std::span<const int> lengths, int delay) {
  const int n = static_cast<int>(lengths.size());
  return std::max(n + 1, (completion_steps(lengths, delay) - 1) / delay + 1);
}

TargetLayout build_training_target(const std::vector<std::vector<int>>& subsequences, int delay,
                                   bool exploration) {
  if (subsequences.empty()) throw DataError("training target has no subsequences");
  if (delay < 1) throw ContractError("delay must be >= 1");
  TargetLayout layout;
  layout.delay = delay;
  for (std::size_t i = 0; i < subsequences.size(); ++i) {
    if (subsequences[i].empty()) {
      throw DataError("target subsequence " + std::to_string(i + 1) +
                      " is empty; empty subsequences are reserved for the terminator");
    }
    std::vector<int> framed{Vocab::kBos};
    framed.insert(framed.end(), subsequences[i].begin(), subsequences[i].end());
    framed.push_back(Vocab::kEos);
    layout.framed.push_back(std::move(framed));
  }
  layout.framed.push_back({Vocab::kBos, Vocab::kEos});
  if (exploration) {
    std::vector<int> lengths;
    for (const auto& sub : subsequences) lengths.push_back(static_cast<int>(sub.size()));
    const int total = established_before_completion(lengths, delay);
    layout.framed.resize(static_cast<std::size_t>(total), {Vocab::kBos, Vocab::kEos});
  }

  // (timestep, subseq, offset)
  std::vector<std::tuple<int, int, int>> slots;
  for (std::size_t i = 0; i < layout.framed.size(); ++i) {
    for (std::size_t j = 0; j < layout.framed[i].size(); ++j) {
      const GridPosition p{static_cast<int>(i) + 1, static_cast<int>(j)};
      slots.emplace_back(timestep_of(p, delay), p.subseq, p.offset);
    }
  }
  std::sort(slots.begin(), slots.end());
  for (const auto& [ts, i, j] : slots) {
    const auto& sub = layout.framed[static_cast<std::size_t>(i - 1)];
    layout.tokens.push_back(sub[static_cast<std::size_t>(j)]);
    layout.positions.push_back(GridPosition{i, j});
    const bool predicts = static_cast<std::size_t>(j + 1) < sub.size();
    layout.targets.push_back(predicts ? sub[static_cast<std::size_t>(j + 1)] : -1);
    layout.loss_mask.push_back(predicts ? 1 : 0);
  }
  layout.mask = build_self_attention_mask(layout.positions, delay);
  return layout;
}

std::vector<int> build_sequential_target(const std::vector<std::vector<int>>& subsequences,
                                         int sep_id) {
  std::vector<int> flat{Vocab::kBos};
  for (std::size_t i = 0; i < subsequences.size(); ++i) {
    if (i) flat.push_back(sep_id);
    flat.insert(flat.end(), subsequences[i].begin(), subsequences[i].end());
  }
  flat.push_back(Vocab::kEos);
  return flat;
}

TargetLayout sequential_layout(std::span<const int> flat) {
  if (flat.size() < 2 || flat.front() != Vocab::kBos || flat.back() != Vocab::kEos) {
    throw DataError("sequential target must start with <bos> and end with <eos>");
  }
  TargetLayout layout;
  layout.framed.emplace_back(flat.begin(), flat.end());
  const int n = static_cast<int>(flat.size());
  for (int j = 0; j < n; ++j) {
    layout.tokens.push_back(flat[j]);
    layout.positions.push_back(GridPosition{1, j});
    const bool predicts = j + 1 < n;
    layout.targets.push_back(predicts ? flat[j + 1] : -1);
    layout.loss_mask.push_back(predicts ? 1 : 0);
  }
  layout.mask = MaskMatrix::causal(n);
  return layout;
}

TargetLayout make_layout(const std::vector<std::vector<int>>& subsequences, Regime regime,
                         int delay, bool exploration) {
  if (regime == Regime::kPipelined) {
    return build_training_target(subsequences, delay, exploration);
  }
  if (subsequences.empty()) throw DataError("training target has no subsequences");
  return sequential_layout(build_sequential_target(subsequences, Vocab::kSep));
}

template <typename T>
double compute_loss(const Tensor<T>& logits, const TargetLayout& layout) {
  if (logits.rows() != layout.length()) {
    throw ContractError("compute_loss: " + std::to_string(logits.rows()) +
                        " logit rows for a layout of length " +
                        std::to_string(layout.length()));
  }
  const int count = layout.predicting_positions();
  if (count == 0) throw ContractError("compute_loss: loss mask selects no position");
  const int v = logits.cols();
  double total = 0;
  for (int r = 0; r < layout.length(); ++r) {
    if (!layout.loss_mask[r]) continue;
    const auto row = logits.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (T x : row) mx = std::max(mx, static_cast<double>(x));
    double z = 0;
    for (T x : row) z += std::exp(static_cast<double>(x) - mx);
    const int y = layout.targets[r];
    if (y < 0 || y >= v) throw ContractError("compute_loss: target outside vocabulary");
    total += std::log(z) + mx - static_cast<double>(row[static_cast<std::size_t>(y)]);
  }
  return total / count;
}

TrainingBatch make_batch(std::span<const EncodedExample> data, std::span<const int> indices,
                         Regime regime, int delay, int max_input_length, bool exploration) {
  if (indices.empty()) throw ContractError("make_batch: empty batch");
  std::vector<TargetLayout> layouts;
  int max_dec = 0;
  int max_enc = 0;
  for (int idx : indices) {
    const EncodedExample& ex = data[static_cast<std::size_t>(idx)];
    if (ex.input.empty()) throw DataError("example " + std::to_string(idx) + " has empty input");
    layouts.push_back(make_layout(ex.target, regime, delay, exploration));
    max_dec = std::max(max_dec, layouts.back().length());
    max_enc = std::max(max_enc, std::min(static_cast<int>(ex.input.size()), max_input_length));
  }
  const int B = static_cast<int>(indices.size());
  TrainingBatch batch;
  batch.enc.batch = B;
  batch.enc.length = max_enc;
  batch.enc.ids.assign(static_cast<std::size_t>(B) * max_enc, Vocab::kPad);
  batch.enc.valid.assign(batch.enc.ids.size(), 0);
  batch.dec.batch = B;
  batch.dec.length = max_dec;
  batch.dec.delay = regime == Regime::kPipelined ? delay : 1;
  batch.dec.ids.assign(static_cast<std::size_t>(B) * max_dec, Vocab::kPad);
  batch.dec.positions.assign(batch.dec.ids.size(), GridPosition{1, 0});
  batch.dec.valid.assign(batch.dec.ids.size(), 0);
  batch.dec.mask.assign(static_cast<std::size_t>(B) * max_dec * max_dec, 0);
  batch.targets.assign(batch.dec.ids.size(), -1);
  batch.example_of_row.assign(batch.dec.ids.size(), -1);
  for (int b = 0; b < B; ++b) {
    const EncodedExample& ex = data[static_cast<std::size_t>(indices[b])];
    const int len = std::min(static_cast<int>(ex.input.size()), max_input_length);
    for (int s = 0; s < len; ++s) {
      batch.enc.ids[static_cast<std::size_t>(b) * max_enc + s] = ex.input[s];
      batch.enc.valid[static_cast<std::size_t>(b) * max_enc + s] = 1;
    }
    const TargetLayout& L = layouts[static_cast<std::size_t>(b)];
    for (int r = 0; r < L.length(); ++r) {
      const std::size_t row = static_cast<std::size_t>(b) * max_dec + r;
      batch.dec.ids[row] = L.tokens[r];
      batch.dec.positions[row] = L.positions[r];
      batch.dec.valid[row] = 1;
      batch.targets[row] = L.loss_mask[r] ? L.targets[r] : -1;
      batch.example_of_row[row] = b;
      for (int c = 0; c < L.length(); ++c) {
        batch.dec.mask[row * max_dec + c] = L.mask.allowed(r, c) ? 1 : 0;
      }
    }
    batch.predicting_per_example.push_back(L.predicting_positions());
  }
  return batch;
}

template <typename T>
Var batch_loss(Tape<T>& tape, Seq2SeqModel<T>& model, const TrainingBatch& batch,
               std::mt19937_64* dropout_rng, std::vector<double>* per_example) {
  const Var logits = model.forward(tape, batch.enc, batch.dec, dropout_rng);
  const int B = batch.dec.batch;
  std::vector<T> weights(batch.targets.size(), T{0});
  for (std::size_t r = 0; r < batch.targets.size(); ++r) {
    if (batch.targets[r] < 0) continue;
    const int b = batch.example_of_row[r];
    weights[r] = T{1} / static_cast<T>(batch.predicting_per_example[static_cast<std::size_t>(b)] * B);
  }
  std::vector<T> row_loss;
  const Var loss = ops::weighted_nll<T>(tape, logits, batch.targets, weights, &row_loss);
  if (per_example) {
    per_example->assign(static_cast<std::size_t>(B), 0.0);
    for (std::size_t r = 0; r < batch.targets.size(); ++r) {
      if (batch.targets[r] < 0) continue;
      const int b = batch.example_of_row[r];
      (*per_example)[static_cast<std::size_t>(b)] +=
          static_cast<double>(row_loss[r]) / batch.predicting_per_example[static_cast<std::size_t>(b)];
    }
  }
  return loss;
}

void TrainConfig::validate() const {
  if (batch_size < 1 || epochs < 1 || max_input_length < 1 || delay < 1 || !(lr >= 0) ||
      !(weight_decay >= 0) || warmup_steps < 0 || !(final_lr_ratio >= 0) || !(clip_norm >= 0)) {
    throw ConfigError("train config fields out of range");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"regime", regime_name(regime)},
          {"batch_size", batch_size},
          {"lr", lr},
          {"epochs", epochs},
          {"seed", seed},
          {"max_input_length", max_input_length},
          {"delay", delay},
          {"weight_decay", weight_decay},
          {"warmup_steps", warmup_steps},
          {"final_lr_ratio", final_lr_ratio},
          {"clip_norm", clip_norm},
          {"exploration_targets", exploration_targets},
          {"loss_reduction", "mean over predicting positions, then mean over batch"}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("regime")) c.regime = parse_regime(j.at("regime").get<std::string>());
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.max_input_length = j.value("max_input_length", c.max_input_length);
  c.delay = j.value("delay", c.delay);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.final_lr_ratio = j.value("final_lr_ratio", c.final_lr_ratio);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.exploration_targets = j.value("exploration_targets", c.exploration_targets);
  return c;
}

TrainConfig TrainConfig::paper_preset() {
  TrainConfig c;
  c.batch_size = 24;
  c.lr = 1e-4;
  c.epochs = 10;
  return c;
}

template <typename T>
FitResult fit(Seq2SeqModel<T>& model, std::span<const EncodedExample> data,
              const TrainConfig& config, const FitHooks& hooks) {
  config.validate();
  if (data.empty()) throw DataError("training dataset is empty");
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 order_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64* drop = model.config().dropout > 0 ? &dropout_rng : nullptr;

  AdamWConfig opt_cfg;
  opt_cfg.lr = config.lr;
  opt_cfg.weight_decay = config.weight_decay;
  AdamW<T> opt(opt_cfg);
  std::vector<Parameter<T>*> params = model.parameters();

  const int n = static_cast<int>(data.size());
  const int per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::int64_t total = static_cast<std::int64_t>(per_epoch) * config.epochs;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_sum = 0;
    for (int s = 0; s < n; s += config.batch_size) {
      const int e = std::min(n, s + config.batch_size);
      std::span<const int> idx(order.data() + s, static_cast<std::size_t>(e - s));
      const TrainingBatch batch =
          make_batch(data, idx, config.regime, config.delay, config.max_input_length,
                     config.exploration_targets);
      model.zero_grad();
      Tape<T> tape(true);
      const Var loss = batch_loss(tape, model, batch, drop);
      const double value = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(value)) {
        throw TrainingDivergence("non-finite loss at step " + std::to_string(result.steps));
      }
      tape.backward(loss);

      if (config.clip_norm > 0) {
        double sq = 0;
        for (const auto* p : params)
          for (T g : p->grad.values()) sq += static_cast<double>(g) * g;
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm) {
          const T f = static_cast<T>(config.clip_norm / norm);
          for (auto* p : params)
            for (auto& g : p->grad.values()) g *= f;
        }
      }

      const std::int64_t step = result.steps + 1;
      double lr = config.lr;
      if (config.warmup_steps > 0 && step <= config.warmup_steps) {
        lr *= static_cast<double>(step) / config.warmup_steps;
      }
      if (total > 1) {
        lr *= 1.0 - (1.0 - config.final_lr_ratio) * static_cast<double>(step - 1) /
                        static_cast<double>(total - 1);
      }
      opt.set_lr(lr);
      opt.step(params);
      ++result.steps;
      epoch_sum += value * (e - s);
    }
    result.epoch_loss.push_back(epoch_sum / n);
    if (hooks.on_epoch) hooks.on_epoch(epoch, result.epoch_loss.back());
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

nlohmann::json run_metadata(const TrainConfig& train, const ModelConfig& model,
                            const std::string& vocab_hash, const FitResult& result) {
  return {{"format", "pipedec-run"},
          {"format_version", 1},
          {"train", train.to_json()},
          {"model", model.to_json()},
          {"seed", train.seed},
          {"vocab_hash", vocab_hash},
          {"loss_curve", result.epoch_loss},
          {"steps", result.steps},
          {"train_seconds", result.seconds}};
}

template double compute_loss<float>(const Tensor<float>&, const TargetLayout&);
template double compute_loss<double>(const Tensor<double>&, const TargetLayout&);
template Var batch_loss<float>(Tape<float>&, Seq2SeqModel<float>&, const TrainingBatch&,
                               std::mt19937_64*, std::vector<double>*);
template Var batch_loss<double>(Tape<double>&, Seq2SeqModel<double>&, const TrainingBatch&,
                                std::mt19937_64*, std::vector<double>*);
template FitResult fit<float>(Seq2SeqModel<float>&, std::span<const EncodedExample>,
                              const TrainConfig&, const FitHooks&);
template FitResult fit<double>(Seq2SeqModel<double>&, std::span<const EncodedExample>,
                               const TrainConfig&, const FitHooks&);

}  // namespace pipedec
