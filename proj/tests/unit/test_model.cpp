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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles/gradcheck.hpp"
#include "pipedec/model.hpp"
#include "pipedec/training.hpp"
#include "pipedec/vocab.hpp"

using namespace pipedec;

namespace {

ModelConfig tiny(int layers = 1, int dim = 8) {
  ModelConfig c;
  c.num_layers = layers;
  c.num_heads = 2;
  c.model_dim = dim;
  c.ff_dim = 2 * dim;
  c.vocab_size = 12;
  c.num_buckets = 8;
  c.max_distance = 16;
  c.dropout = 0.0;
  return c;
}

const std::vector<int> kInput{5, 6, 7, 8, 9};

// Figure 2 grid packed by (timestep, subseq): <bos>1 A <bos>2 B D <bos>3 ...
struct Grid {
  std::vector<int> tokens;
  std::vector<GridPosition> pos;
};

Grid figure2() {
  return {{1, 5, 1, 6, 8, 1, 7, 9, 2},
          {{1, 0}, {1, 1}, {2, 0}, {1, 2}, {2, 1}, {3, 0}, {1, 3}, {2, 2}, {3, 1}}};
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("config validation and json") {
  ModelConfig c = tiny();
  c.validate();
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = tiny();
  c.vocab_size = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = tiny();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("unidirectional buckets") {
  CHECK(unidirectional_bucket(0, 32, 128) == 0);
  int prev = 0;
  for (int d = 0; d <= 256; ++d) {
    const int b = unidirectional_bucket(d, 32, 128);
    CHECK(b >= prev);
    CHECK(b < 32);
    if (d >= 128) CHECK(b == 31);
    prev = b;
  }
  CHECK(unidirectional_bucket(5, 32, 128) == 5);
}

TEST_CASE("bidirectional buckets separate directions") {
  CHECK(bidirectional_bucket(0, 32, 128) == 0);
  for (int d = 1; d < 200; ++d) {
    const int left = bidirectional_bucket(-d, 32, 128);
    const int right = bidirectional_bucket(d, 32, 128);
    CHECK(left != right);
    CHECK(left < 16);
    CHECK(right >= 16);
    CHECK(right < 32);
  }
}

TEST_CASE("encode shape, determinism and position sensitivity") {
  Seq2SeqModel<float> m(tiny(), 3);
  const std::vector<int> one{5};
  CHECK(m.encode(one).hidden.shape() == Shape{1, 8});
  const auto a = m.encode(kInput);
  CHECK(a.hidden == m.encode(kInput).hidden);
  Seq2SeqModel<float> same_seed(tiny(), 3);
  CHECK(a.hidden == same_seed.encode(kInput).hidden);
  std::vector<int> swapped = kInput;
  std::swap(swapped[0], swapped[1]);
  CHECK_FALSE(a.hidden == m.encode(swapped).hidden);
  for (float x : a.hidden.values()) CHECK(std::isfinite(x));
  CHECK_THROWS_AS(m.encode(std::vector<int>{}), EncodingError);
  CHECK_THROWS_AS(m.encode(std::vector<int>{12}), EncodingError);
  CHECK_THROWS_AS(m.encode(std::vector<int>{-1}), EncodingError);
}

TEST_CASE("decoder_forward shape and errors") {
  Seq2SeqModel<float> m(tiny(), 4);
  const auto enc = m.encode(kInput);
  const Grid g = figure2();
  const MaskMatrix mask = build_self_attention_mask(g.pos, 1);
  const auto logits = m.decoder_forward(g.tokens, g.pos, mask, enc, 1);
  CHECK(logits.shape() == Shape{9, 12});
  for (float x : logits.values()) CHECK(std::isfinite(x));
  const MaskMatrix small = MaskMatrix::causal(3);
  CHECK_THROWS_AS(m.decoder_forward(g.tokens, g.pos, small, enc, 1), ContractError);
  std::vector<GridPosition> short_pos(g.pos.begin(), g.pos.end() - 1);
  CHECK_THROWS_AS(m.decoder_forward(g.tokens, short_pos, mask, enc, 1), ContractError);
}

TEST_CASE("single subsequence matches the batched training graph") {
  Seq2SeqModel<float> m(tiny(2), 5);
  const std::vector<int> flat{1, 5, 6, 3, 7, 2};
  std::vector<GridPosition> pos;
  for (int j = 0; j < 6; ++j) pos.push_back({1, j});
  const auto direct = m.decoder_forward(flat, pos, MaskMatrix::causal(6), m.encode(kInput), 1);

  std::vector<EncodedExample> data{{kInput, {{5, 6}, {7}}}};
  const std::vector<int> idx{0};
  const TrainingBatch batch = make_batch(data, idx, Regime::kSequential, 1, 256);
  Tape<float> tape(false);
  const auto& graph = tape.value(m.forward(tape, batch.enc, batch.dec, nullptr));
  CHECK(graph.rows() == 6);
  CHECK(max_abs_diff(graph.values(), direct.values()) < 1e-5);
}

TEST_CASE("relative bias is direction free with self at bucket zero") {
  Seq2SeqModel<float> m(tiny(), 6);
  const Grid g = figure2();
  const auto buckets = m.relative_buckets(g.pos, 1);
  const int n = static_cast<int>(g.pos.size());
  for (int q = 0; q < n; ++q) {
    CHECK(buckets[q * n + q] == 0);
    for (int k = 0; k < n; ++k) CHECK(buckets[q * n + k] == buckets[k * n + q]);
  }
  const auto bias = m.relative_bias(g.pos, 1);
  CHECK(bias.shape() == Shape{2, n, n});
  CHECK(bias[1] == bias[static_cast<std::size_t>(n)]);
}

TEST_CASE("tokens hidden by the mask cannot influence a query") {
  Seq2SeqModel<float> m(tiny(2), 7);
  const auto enc = m.encode(kInput);
  const Grid g = figure2();
  const MaskMatrix mask = build_self_attention_mask(g.pos, 1);
  const auto base = m.decoder_forward(g.tokens, g.pos, mask, enc, 1);
  const int n = static_cast<int>(g.tokens.size());
  for (int k = 0; k < n; ++k) {
    Grid changed = g;
    changed.tokens[k] = changed.tokens[k] == 10 ? 11 : 10;
    const auto out = m.decoder_forward(changed.tokens, g.pos, mask, enc, 1);
    for (int q = 0; q < n; ++q) {
      if (mask.allowed(q, k)) continue;
      CHECK(max_abs_diff(out.row(q), base.row(q)) <= 1e-6);
    }
  }
  // Cutting a key out of other rows leaves the rows that never saw it alone.
  for (int k = 0; k < n; ++k) {
    MaskMatrix cut = mask;
    for (int q = 0; q < n; ++q)
      if (q != k) cut.set(q, k, false);
    const auto out = m.decoder_forward(g.tokens, g.pos, cut, enc, 1);
    for (int q = 0; q < n; ++q)
      if (!mask.allowed(q, k)) CHECK(max_abs_diff(out.row(q), base.row(q)) == 0.0);
  }
}

TEST_CASE("incremental steps match full recomputation") {
  Seq2SeqModel<float> m(tiny(2), 8);
  const auto enc = m.encode(kInput);
  const Grid g = figure2();
  auto state = m.start_incremental(enc);
  // Steps of the Figure 2 trace: {<bos>1}, {A, <bos>2}, {B, D, <bos>3}, ...
  const std::vector<std::pair<int, int>> steps{{0, 1}, {1, 3}, {3, 6}, {6, 9}};
  for (auto [from, to] : steps) {
    const std::span<const int> toks(g.tokens.data() + from, to - from);
    const std::span<const GridPosition> pos(g.pos.data() + from, to - from);
    const auto inc = state.step(toks, pos, 1);
    const std::span<const int> prefix_t(g.tokens.data(), to);
    const std::span<const GridPosition> prefix_p(g.pos.data(), to);
    const auto full = m.decoder_forward(prefix_t, prefix_p,
                                        build_self_attention_mask(prefix_p, 1), enc, 1);
    for (int r = 0; r < to - from; ++r) CHECK(max_abs_diff(inc.row(r), full.row(from + r)) <= 1e-4);
  }
  CHECK(state.cached() == 9);
}

TEST_CASE("incremental steps match in double precision on a delayed grid") {
  Seq2SeqModel<double> m(tiny(2), 9);
  const auto enc = m.encode(kInput);
  // Three subsequences at delay 2 over six steps.
  std::vector<std::vector<GridPosition>> steps{
      {{1, 0}}, {{1, 1}}, {{1, 2}, {2, 0}}, {{1, 3}, {2, 1}}, {{1, 4}, {2, 2}, {3, 0}}, {{1, 5}, {2, 3}, {3, 1}}};
  auto state = m.start_incremental(enc);
  std::vector<int> all_t;
  std::vector<GridPosition> all_p;
  std::mt19937 rng(1);
  for (const auto& step : steps) {
    std::vector<int> toks;
    for (std::size_t i = 0; i < step.size(); ++i) toks.push_back(step[i].offset == 0 ? 1 : 5 + int(rng() % 7));
    const auto inc = state.step(toks, step, 2);
    all_t.insert(all_t.end(), toks.begin(), toks.end());
    all_p.insert(all_p.end(), step.begin(), step.end());
    const auto full = m.decoder_forward(all_t, all_p, build_self_attention_mask(all_p, 2), enc, 2);
    const int first = static_cast<int>(all_t.size() - toks.size());
    for (std::size_t r = 0; r < toks.size(); ++r)
      for (int c = 0; c < 12; ++c)
        CHECK(std::abs(inc.at(static_cast<int>(r), c) - full.at(first + static_cast<int>(r), c)) <= 1e-8);
  }
}

TEST_CASE("incremental state rejects desynchronized positions") {
  Seq2SeqModel<float> m(tiny(), 10);
  auto state = m.start_incremental(m.encode(kInput));
  const std::vector<int> t1{1};
  const std::vector<GridPosition> skip{{1, 1}};
  CHECK_THROWS_AS(state.step(t1, skip, 1), ConsistencyError);
  CHECK(state.cached() == 0);
  const std::vector<GridPosition> start{{1, 0}};
  state.step(t1, start, 1);
  const std::vector<GridPosition> jump{{3, 0}};
  CHECK_THROWS_AS(state.step(t1, jump, 1), ConsistencyError);
  const std::vector<GridPosition> repeat{{1, 0}};
  CHECK_THROWS_AS(state.step(t1, repeat, 1), ConsistencyError);
  CHECK(state.cached() == 1);
  const std::vector<int> two{5, 1};
  const std::vector<GridPosition> unordered{{2, 0}, {1, 1}};
  CHECK_THROWS_AS(state.step(two, unordered, 1), ConsistencyError);
}

TEST_CASE("checkpoint round trip preserves outputs") {
  Seq2SeqModel<float> m(tiny(), 11);
  const auto path = std::filesystem::temp_directory_path() / "pipedec_test_model.ckpt";
  m.save(path, {{"tag", 1}});
  const auto loaded = Seq2SeqModel<float>::load(path);
  CHECK(loaded.config() == m.config());
  CHECK(loaded.encode(kInput).hidden == m.encode(kInput).hidden);
  CHECK(load_checkpoint<float>(path).meta["tag"] == 1);
}

TEST_CASE("training graph gradients on a tiny model") {
  Seq2SeqModel<double> m(tiny(1, 4), 12);
  std::vector<EncodedExample> data{{{5, 6, 7}, {{8, 9}, {10}}}, {{6, 6}, {{11}}}};
  const std::vector<int> idx{0, 1};
  const TrainingBatch batch = make_batch(data, idx, Regime::kPipelined, 1, 256);
  auto rep = oracle::gradcheck(m.parameters(), [&](Tape<double>& t) {
    return batch_loss(t, m, batch, nullptr);
  }, 1e-5, 6);
  CHECK(rep.pass_rate() >= 0.99);
  MESSAGE("worst relative error " << rep.worst);
}
