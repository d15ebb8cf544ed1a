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
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipedec/data.hpp"
#include "pipedec/decoding.hpp"
#include "pipedec/metrics.hpp"
#include "pipedec/training.hpp"

namespace pipedec {

// A decoding configuration under test. `make_decoder` receives the example
// index so oracle decoders can be built per example; model decoders ignore it.
struct RegimeSpec {
  std::string name;
  Regime regime = Regime::kPipelined;
  int delay = 1;
  std::function<std::unique_ptr<StepDecoder>(std::size_t example)> make_decoder;
};

// Loads a float checkpoint written by `fit` and wraps it as a regime. The
// regime and delay come from the checkpoint unless `delay_override` > 0.
// Throws ConfigError when the file does not exist.
RegimeSpec load_model_regime(const std::filesystem::path& checkpoint, const std::string& name,
                             int delay_override = 0);

struct Decoded {
  std::vector<std::vector<int>> subsequences;
  int steps = 0;
  int emitted = 0;
  std::string termination;
  std::vector<StepRecord> trace;
};

// One example through either regime. The sequential output is split on <sep>.
Decoded decode_example(StepDecoder& decoder, std::span<const int> input, Regime regime,
                       const PipelineSchedule& schedule, int sequential_max_len);

struct ExampleScore {
  std::size_t index = 0;
  int n = 0;  // gold subsequences
  int steps = 0;
  int emitted = 0;
  std::string termination;
  double step_speedup = 0;  // baseline steps / steps, 0 without a baseline
  double em_f1 = 0, pm_f1 = 0, f1_at_5 = 0, f1_at_m = 0;
  double rouge1 = 0, rouge2 = 0, rouge_l = 0;
  std::vector<std::string> predicted;
};

struct ScoreMeans {
  int count = 0;
  double steps = 0, emitted = 0;
  double em_f1 = 0, pm_f1 = 0, f1_at_5 = 0, f1_at_m = 0;
  double rouge1 = 0, rouge2 = 0, rouge_l = 0;
  double step_speedup = 0;  // ratio of summed baseline steps to summed steps
};

struct MetricReport {
  std::string name;
  Regime regime = Regime::kPipelined;
  int delay = 1;
  std::vector<ExampleScore> examples;
  ScoreMeans overall;
  std::map<int, ScoreMeans> groups;  // keyed by gold subsequence count
  double seconds = 0;                // best pass over the dataset
  double throughput = 0;             // examples per second
  double wall_speedup = 0;           // baseline seconds / seconds
  long peak_rss_kb = 0;
};

struct BenchConfig {
  PipelineSchedule schedule;
  int sequential_max_len = 256;
  int workers = 1;
  int repeats = 1;
  int min_group = 10;
  // Regime name used as the speedup denominator; empty picks the first
  // sequential regime, if any.
  std::string baseline;
};

struct BenchReport {
  std::vector<MetricReport> regimes;
  std::string baseline;
  nlohmann::json metadata() const;
  const MetricReport& find(const std::string& name) const;
};

BenchReport run_benchmark(std::span<const Example> data, const Vocab& vocab,
                          std::span<const RegimeSpec> regimes, const BenchConfig& config);

// One row per regime and group (plus an "all" row). Wall-clock columns are
// omitted when `wall_clock` is false, which makes the output reproducible.
void write_csv(std::ostream& os, const BenchReport& report, int min_group, bool wall_clock = true);

// "x y" lines, one block per pipelined regime: step speedup against n.
void write_speedup_plot(std::ostream& os, const BenchReport& report, int min_group);
// "delay em_f1 throughput step_speedup" lines for the pipelined regimes.
void write_delay_sweep_plot(std::ostream& os, const BenchReport& report);

long peak_rss_kb();

}  // namespace pipedec
