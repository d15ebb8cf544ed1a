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

#include "pipedec/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "pipedec/errors.hpp"

namespace pipedec {
namespace {

void check_range(const IntRange& r, const char* name, int lo) {
  if (r.min < lo || r.max < r.min) {
    throw SpecError(std::string("invalid range for ") + name + ": [" + std::to_string(r.min) +
                    ", " + std::to_string(r.max) + "]");
  }
}

int draw(std::mt19937_64& rng, const IntRange& r) {
  return std::uniform_int_distribution<int>(r.min, r.max)(rng);
}

nlohmann::json range_json(const IntRange& r) { return {r.min, r.max}; }

IntRange range_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw SpecError("range must be [min, max]");
  return {j[0].get<int>(), j[1].get<int>()};
}

// Draws `n` insertion gaps in [0, slots], sorted so spans keep input order.
// Repeats are allowed, so spans may be adjacent.
std::vector<int> gap_positions(std::mt19937_64& rng, int n, int slots) {
  std::uniform_int_distribution<int> pick(0, slots);
  std::vector<int> gaps(static_cast<std::size_t>(n));
  for (auto& g : gaps) g = pick(rng);
  std::sort(gaps.begin(), gaps.end());
  return gaps;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (task != "span-copy" && task != "sentence-copy") throw SpecError("unknown task: " + task);
  if (count < 0) throw SpecError("count must be >= 0");
  if (vocab_size < 1) throw SpecError("vocab_size must be >= 1");
  check_range(span_count, "span_count", 1);
  check_range(span_length, "span_length", 1);
  check_range(context_length, "context_length", 0);
  if (!(distractor_rate >= 0.0 && distractor_rate <= 1.0)) {
    throw SpecError("distractor_rate must lie in [0, 1]");
  }
  if (task == "span-copy") {
    const long need = static_cast<long>(span_count.max) * span_length.max;
    if (need >= vocab_size) {
      throw SpecError("span capacity exceeded: " + std::to_string(need) +
                      " distinct span words need a vocabulary larger than " +
                      std::to_string(vocab_size));
    }
  }
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"task", task},
          {"seed", seed},
          {"count", count},
          {"vocab_size", vocab_size},
          {"span_count", range_json(span_count)},
          {"span_length", range_json(span_length)},
          {"context_length", range_json(context_length)},
          {"distractor_rate", distractor_rate}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.task = j.value("task", s.task);
    s.seed = j.value("seed", s.seed);
    s.count = j.value("count", s.count);
    s.vocab_size = j.value("vocab_size", s.vocab_size);
    if (j.contains("span_count")) s.span_count = range_from(j["span_count"]);
    if (j.contains("span_length")) s.span_length = range_from(j["span_length"]);
    if (j.contains("context_length")) s.context_length = range_from(j["context_length"]);
    s.distractor_rate = j.value("distractor_rate", s.distractor_rate);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("bad synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSpec SyntheticSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string span_marker(int index) { return "<span" + std::to_string(index) + ">"; }
std::string content_word(int index) { return "w" + std::to_string(index); }

std::vector<Example> gen_span_copy(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<int> words(static_cast<std::size_t>(spec.vocab_size));
  std::iota(words.begin(), words.end(), 0);
  std::bernoulli_distribution repeat(spec.distractor_rate);

  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int e = 0; e < spec.count; ++e) {
    const int n = draw(rng, spec.span_count);
    std::vector<int> lengths(static_cast<std::size_t>(n));
    int used = 0;
    for (auto& m : lengths) used += (m = draw(rng, spec.span_length));
    // Partial Fisher-Yates: the first `used` entries become span words.
    for (int i = 0; i < used; ++i) {
      std::uniform_int_distribution<int> pick(i, spec.vocab_size - 1);
      std::swap(words[static_cast<std::size_t>(i)], words[static_cast<std::size_t>(pick(rng))]);
    }
    std::uniform_int_distribution<int> free_word(used, spec.vocab_size - 1);
    std::uniform_int_distribution<int> span_word(0, used - 1);

    const int context = draw(rng, spec.context_length);
    Tokens distractors;
    for (int c = 0; c < context; ++c) {
      const int w = repeat(rng) ? span_word(rng) : free_word(rng);
      distractors.push_back(content_word(words[static_cast<std::size_t>(w)]));
    }
    const std::vector<int> gaps = gap_positions(rng, n, context);

    Example ex;
    ex.task = "span-copy";
    int next_word = 0;
    std::size_t d = 0;
    for (int s = 0; s < n; ++s) {
      while (static_cast<int>(d) < gaps[static_cast<std::size_t>(s)]) ex.input.push_back(distractors[d++]);
      Tokens span;
      for (int k = 0; k < lengths[static_cast<std::size_t>(s)]; ++k) {
        span.push_back(content_word(words[static_cast<std::size_t>(next_word++)]));
      }
      ex.input.push_back(span_marker(s + 1));
      ex.input.insert(ex.input.end(), span.begin(), span.end());
      ex.input.push_back(kSpanClose);
      ex.target.push_back(std::move(span));
    }
    while (d < distractors.size()) ex.input.push_back(distractors[d++]);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> gen_sentence_copy(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> word(0, spec.vocab_size - 1);
  auto sentence = [&] {
    Tokens s;
    const int len = draw(rng, spec.span_length);
    for (int k = 0; k < len; ++k) s.push_back(content_word(word(rng)));
    s.push_back(".");
    return s;
  };

  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int e = 0; e < spec.count; ++e) {
    const int n = draw(rng, spec.span_count);
    const int context = draw(rng, spec.context_length);
    std::vector<Tokens> selected;
    for (int s = 0; s < n; ++s) selected.push_back(sentence());
    std::vector<Tokens> distractors;
    for (int c = 0; c < context; ++c) distractors.push_back(sentence());
    const std::vector<int> gaps = gap_positions(rng, n, context);

    Example ex;
    ex.task = "sentence-copy";
    std::size_t d = 0;
    for (int s = 0; s < n; ++s) {
      while (static_cast<int>(d) < gaps[static_cast<std::size_t>(s)]) {
        ex.input.insert(ex.input.end(), distractors[d].begin(), distractors[d].end());
        ++d;
      }
      ex.input.push_back(span_marker(s + 1));
      ex.input.insert(ex.input.end(), selected[static_cast<std::size_t>(s)].begin(),
                      selected[static_cast<std::size_t>(s)].end());
      ex.target.push_back(selected[static_cast<std::size_t>(s)]);
    }
    for (; d < distractors.size(); ++d) {
      ex.input.insert(ex.input.end(), distractors[d].begin(), distractors[d].end());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> generate(const SyntheticSpec& spec) {
  spec.validate();
  return spec.task == "span-copy" ? gen_span_copy(spec) : gen_sentence_copy(spec);
}

Tokens tokenize(const std::string& text) {
  std::istringstream in(text);
  Tokens out;
  for (std::string t; in >> t;) out.push_back(std::move(t));
  return out;
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::vector<int>> split_on_separator(std::span<const int> tokens, int sep_id) {
  std::vector<std::vector<int>> out;
  std::vector<int> run;
  for (int t : tokens) {
    if (t == sep_id) {
      if (!run.empty()) out.push_back(std::move(run));
      run.clear();
    } else {
      run.push_back(t);
    }
  }
  if (!run.empty()) out.push_back(std::move(run));
  return out;
}

nlohmann::json example_to_json(const Example& e) {
  return {{"input", e.input}, {"target", e.target}, {"task", e.task}};
}

Example example_from_json(const nlohmann::json& j) {
  Example e;
  try {
    e.input = j.at("input").get<Tokens>();
    e.target = j.at("target").get<std::vector<Tokens>>();
    e.task = j.value("task", std::string{});
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed record: ") + ex.what());
  }
  if (e.input.empty()) throw DataError("empty input");
  if (e.target.empty()) throw DataError("empty target list");
  for (const auto& s : e.target) {
    if (s.empty()) throw DataError("empty target subsequence");
  }
  return e;
}

std::vector<Example> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(example_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_jsonl(const std::filesystem::path& path, std::span<const Example> data) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  for (const auto& e : data) out << example_to_json(e).dump() << '\n';
  if (!out) throw IngestionError("write failed: " + path.string());
}

Vocab build_vocab(std::span<const Example> data, int min_count) {
  if (data.empty()) throw DataError("cannot build a vocabulary from an empty dataset");
  std::map<std::string, long> counts;
  for (const auto& e : data) {
    for (const auto& t : e.input) ++counts[t];
    for (const auto& s : e.target)
      for (const auto& t : s) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> order(counts.begin(), counts.end());
  // std::map iteration is lexical, so a stable sort keeps lexical ties.
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab vocab;
  for (const auto& [tok, n] : order) {
    if (n >= min_count && !vocab.contains(tok)) vocab.add(tok);
  }
  return vocab;
}

std::vector<EncodedExample> encode_dataset(std::span<const Example> data, const Vocab& vocab) {
  std::vector<EncodedExample> out;
  out.reserve(data.size());
  for (const auto& e : data) {
    EncodedExample enc;
    enc.input = vocab.encode(e.input);
    for (const auto& s : e.target) enc.target.push_back(vocab.encode(s));
    out.push_back(std::move(enc));
  }
  return out;
}

}  // namespace pipedec
