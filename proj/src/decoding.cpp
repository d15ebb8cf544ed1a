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

#include "pipedec/decoding.hpp"

#include <algorithm>
#include <chrono>

#include <json.hpp>

#include "pipedec/training.hpp"
#include "pipedec/vocab.hpp"

namespace pipedec {
namespace {

template <typename T>
Tensor<float> to_float(Tensor<T> t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template cast<float>();
  }
}

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

template <typename T>
void CachedModelDecoder<T>::begin(std::span<const int> input_ids) {
  state_.emplace(model_->start_incremental(model_->encode(input_ids)));
}

template <typename T>
Tensor<float> CachedModelDecoder<T>::step(std::span<const PackedToken> tokens, int delay) {
  if (!state_) throw ContractError("step before begin");
  std::vector<int> ids;
  std::vector<GridPosition> pos;
  std::vector<std::uint8_t> want;
  for (const auto& t : tokens) {
    ids.push_back(t.token);
    pos.push_back(t.pos);
    want.push_back(t.wants_logits ? 1 : 0);
  }
  return to_float(state_->step(ids, pos, delay, want));
}

template <typename T>
void FullRecomputeDecoder<T>::begin(std::span<const int> input_ids) {
  enc_ = model_->encode(input_ids);
  tokens_.clear();
  positions_.clear();
}

template <typename T>
Tensor<float> FullRecomputeDecoder<T>::step(std::span<const PackedToken> tokens, int delay) {
  for (const auto& t : tokens) {
    tokens_.push_back(t.token);
    positions_.push_back(t.pos);
  }
  const MaskMatrix mask = build_self_attention_mask(positions_, delay);
  const Tensor<T> all = model_->decoder_forward(tokens_, positions_, mask, enc_, delay);
  const int n = static_cast<int>(tokens.size());
  const int v = all.cols();
  Tensor<float> out({n, v});
  const int first = all.rows() - n;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < v; ++c) out.at(r, c) = static_cast<float>(all.at(first + r, c));
  return out;
}

ForcedTokenDecoder::ForcedTokenDecoder(std::vector<std::vector<int>> targets, int vocab_size,
                                       Mode mode)
    : targets_(std::move(targets)), vocab_(vocab_size), mode_(mode) {
  if (mode_ == Mode::kFlat) flat_ = build_sequential_target(targets_, Vocab::kSep);
}

Tensor<float> ForcedTokenDecoder::step(std::span<const PackedToken> tokens, int) {
  const int n = static_cast<int>(tokens.size());
  Tensor<float> out({n, vocab_});
  for (int r = 0; r < n; ++r) {
    const GridPosition p = tokens[r].pos;
    int next = Vocab::kEos;
    if (mode_ == Mode::kFlat) {
      if (static_cast<std::size_t>(p.offset + 1) < flat_.size()) {
        next = flat_[static_cast<std::size_t>(p.offset + 1)];
      }
    } else if (p.subseq >= 1 && static_cast<std::size_t>(p.subseq) <= targets_.size()) {
      const auto& sub = targets_[static_cast<std::size_t>(p.subseq - 1)];
      if (static_cast<std::size_t>(p.offset) < sub.size()) {
        next = sub[static_cast<std::size_t>(p.offset)];
      }
    }
    out.at(r, next) = 1.0f;
  }
  return out;
}

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::kAllComplete: return "all-complete";
    case Termination::kTimeMax: return "time_max";
    case Termination::kSubMaxAssisted: return "sub_max-assisted";
  }
  return "unknown";
}

int greedy_token(std::span<const float> scores) {
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

DecodeResult pipelined_decode(StepDecoder& decoder, std::span<const int> input_ids,
                              const PipelineSchedule& schedule) {
  schedule.validate();
  const auto start = Clock::now();
  decoder.begin(input_ids);

  DecodeState state;
  DecodeResult result;
  bool capped = false;
  bool done = false;
  // Tokens emitted in the previous step; they enter the prefix now.
  std::vector<PackedToken> pending;
  for (state.t = 1; state.t <= schedule.time_max; ++state.t) {
    if ((state.t - 1) % schedule.delay == 0) {
      if (state.active < schedule.sub_max) {
        state.subsequences.push_back(GeneratedSubsequence{{Vocab::kBos}, false});
        ++state.active;
        pending.push_back(PackedToken{Vocab::kBos, GridPosition{state.active, 0}, true});
      } else {
        capped = true;
      }
    }
    const Tensor<float> logits = decoder.step(pending, schedule.delay);

    // The frontier of every incomplete subsequence is in `pending`.
    std::vector<PackedToken> next;
    StepRecord rec;
    rec.step = state.t;
    rec.active = state.active;
    for (std::size_t r = 0; r < pending.size(); ++r) {
      const int i = pending[r].pos.subseq;
      GeneratedSubsequence& sub = state.subsequences[static_cast<std::size_t>(i - 1)];
      if (sub.complete || !pending[r].wants_logits) continue;
      const int tok = greedy_token(logits.row(static_cast<int>(r)));
      const GridPosition pos{i, static_cast<int>(sub.tokens.size())};
      sub.tokens.push_back(tok);
      ++rec.emitted;
      if (tok == Vocab::kEos) {
        sub.complete = true;
        next.push_back(PackedToken{tok, pos, false});
      } else {
        ++rec.content_emitted;
        next.push_back(PackedToken{tok, pos, true});
      }
    }
    result.emitted_tokens += rec.emitted;
    rec.seconds = since(start);
    state.trace.push_back(rec);
    pending = std::move(next);

    const bool all_complete =
        std::all_of(state.subsequences.begin(), state.subsequences.end(),
                    [](const GeneratedSubsequence& s) { return s.complete; });
    if (all_complete) {
      done = true;
      break;
    }
  }

  result.steps = std::min(state.t, schedule.time_max);
  result.established = state.active;
  result.termination = !done ? Termination::kTimeMax
                             : (capped ? Termination::kSubMaxAssisted : Termination::kAllComplete);
  for (const auto& sub : state.subsequences) {
    std::vector<int> content;
    for (int tok : sub.tokens) {
      if (tok != Vocab::kBos && tok != Vocab::kEos) content.push_back(tok);
    }
    if (!content.empty()) result.subsequences.push_back(std::move(content));
  }
  result.trace = std::move(state.trace);
  return result;
}

SequentialResult sequential_greedy(StepDecoder& decoder, std::span<const int> input_ids,
                                   int max_len) {
  if (max_len < 1) throw ContractError("sequential_greedy needs max_len >= 1");
  const auto start = Clock::now();
  decoder.begin(input_ids);
  SequentialResult result;
  PackedToken last{Vocab::kBos, GridPosition{1, 0}, true};
  for (int step = 1; step <= max_len; ++step) {
    const Tensor<float> logits = decoder.step(std::span<const PackedToken>(&last, 1), 1);
    const int tok = greedy_token(logits.row(0));
    result.steps = step;
    StepRecord rec{step, 1, tok == Vocab::kEos ? 0 : 1, 1, since(start)};
    result.trace.push_back(rec);
    if (tok == Vocab::kEos) {
      result.finished = true;
      break;
    }
    result.tokens.push_back(tok);
    last = PackedToken{tok, GridPosition{1, step}, true};
  }
  return result;
}

void write_trace(std::ostream& os, std::span<const StepRecord> trace) {
  for (const auto& r : trace) {
    nlohmann::json j = {{"step", r.step},
                        {"emitted", r.emitted},
                        {"content_emitted", r.content_emitted},
                        {"k", r.active},
                        {"seconds", r.seconds}};
    os << j.dump() << '\n';
  }
}

template class CachedModelDecoder<float>;
template class CachedModelDecoder<double>;
template class FullRecomputeDecoder<float>;
template class FullRecomputeDecoder<double>;

}  // namespace pipedec
