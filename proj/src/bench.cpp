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

#include "pipedec/bench.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "pipedec/errors.hpp"

namespace pipedec {
namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::string> as_strings(const Vocab& vocab, const std::vector<std::vector<int>>& subs) {
  std::vector<std::string> out;
  for (const auto& s : subs) out.push_back(join(vocab.decode(s)));
  return out;
}

std::vector<std::string> gold_strings(const Example& e) {
  std::vector<std::string> out;
  for (const auto& s : e.target) out.push_back(join(s));
  return out;
}

std::string joined(const std::vector<std::string>& parts) { return join(parts); }

void score(ExampleScore& s, const std::vector<std::string>& gold) {
  const auto& p = s.predicted;
  s.em_f1 = em_f1(p, gold).f1;
  s.pm_f1 = pm_f1(p, gold).f1;
  s.f1_at_5 = f1_at_k(p, gold, 5);
  s.f1_at_m = f1_at_m(p, gold);
  const std::string pt = joined(p), gt = joined(gold);
  s.rouge1 = rouge_n(pt, gt, 1);
  s.rouge2 = rouge_n(pt, gt, 2);
  s.rouge_l = rouge_l(pt, gt);
}

void accumulate(ScoreMeans& m, const ExampleScore& s) {
  ++m.count;
  m.steps += s.steps;
  m.emitted += s.emitted;
  m.em_f1 += s.em_f1;
  m.pm_f1 += s.pm_f1;
  m.f1_at_5 += s.f1_at_5;
  m.f1_at_m += s.f1_at_m;
  m.rouge1 += s.rouge1;
  m.rouge2 += s.rouge2;
  m.rouge_l += s.rouge_l;
}

void finish(ScoreMeans& m) {
  if (m.count == 0) return;
  const double c = m.count;
  for (double* v : {&m.steps, &m.emitted, &m.em_f1, &m.pm_f1, &m.f1_at_5, &m.f1_at_m, &m.rouge1,
                    &m.rouge2, &m.rouge_l}) {
    *v /= c;
  }
}

// Runs `job(i)` for every index on `workers` threads.
template <typename Job>
void parallel_for(std::size_t count, int workers, Job&& job) {
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::jthread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

}  // namespace

RegimeSpec load_model_regime(const std::filesystem::path& checkpoint, const std::string& name,
                             int delay_override) {
  if (!std::filesystem::exists(checkpoint)) {
    throw ConfigError("checkpoint not found: " + checkpoint.string());
  }
  auto ckpt = load_checkpoint<float>(checkpoint);
  RegimeSpec spec;
  spec.name = name;
  if (ckpt.meta.contains("train")) {
    const TrainConfig tc = TrainConfig::from_json(ckpt.meta["train"]);
    spec.regime = tc.regime;
    spec.delay = tc.delay;
  }
  if (delay_override > 0) spec.delay = delay_override;
  auto model = std::make_shared<const Seq2SeqModel<float>>(Seq2SeqModel<float>::from_checkpoint(ckpt));
  spec.make_decoder = [model](std::size_t) {
    return std::make_unique<CachedModelDecoder<float>>(*model);
  };
  return spec;
}

Decoded decode_example(StepDecoder& decoder, std::span<const int> input, Regime regime,
                       const PipelineSchedule& schedule, int sequential_max_len) {
  Decoded d;
  if (regime == Regime::kPipelined) {
    DecodeResult r = pipelined_decode(decoder, input, schedule);
    d.subsequences = std::move(r.subsequences);
    d.steps = r.steps;
    d.emitted = r.emitted_tokens;
    d.termination = termination_name(r.termination);
    d.trace = std::move(r.trace);
  } else {
    SequentialResult r = sequential_greedy(decoder, input, sequential_max_len);
    d.subsequences = split_on_separator(r.tokens, Vocab::kSep);
    d.steps = r.steps;
    d.emitted = r.steps;
    d.termination = r.finished ? "all-complete" : "max_len";
    d.trace = std::move(r.trace);
  }
  return d;
}

const MetricReport& BenchReport::find(const std::string& name) const {
  for (const auto& r : regimes) {
    if (r.name == name) return r;
  }
  throw ConfigError("no regime named " + name);
}

BenchReport run_benchmark(std::span<const Example> data, const Vocab& vocab,
                          std::span<const RegimeSpec> regimes, const BenchConfig& config) {
  config.schedule.validate();
  if (config.repeats < 1) throw ConfigError("repeats must be >= 1");
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  const auto encoded = encode_dataset(data, vocab);

  BenchReport report;
  report.baseline = config.baseline;
  if (report.baseline.empty()) {
    for (const auto& r : regimes) {
      if (r.regime == Regime::kSequential) {
        report.baseline = r.name;
        break;
      }
    }
  }

  for (const auto& spec : regimes) {
    if (!spec.make_decoder) throw ConfigError("regime " + spec.name + " has no decoder");
    MetricReport rep;
    rep.name = spec.name;
    rep.regime = spec.regime;
    rep.delay = spec.delay;
    rep.examples.resize(data.size());
    report.regimes.push_back(std::move(rep));
  }

  // Passes are interleaved across regimes so a slow stretch of the machine
  // does not land on one regime's repeats; each keeps its fastest pass.
  for (int pass = 0; pass < config.repeats; ++pass) {
    for (std::size_t g = 0; g < regimes.size(); ++g) {
      const RegimeSpec& spec = regimes[g];
      MetricReport& rep = report.regimes[g];
      PipelineSchedule schedule = config.schedule;
      schedule.delay = spec.delay;
      const auto start = Clock::now();
      parallel_for(data.size(), config.workers, [&](std::size_t i) {
        auto decoder = spec.make_decoder(i);
        Decoded d = decode_example(*decoder, encoded[i].input, spec.regime, schedule,
                                   config.sequential_max_len);
        if (pass > 0) return;
        ExampleScore& s = rep.examples[i];
        s.index = i;
        s.n = static_cast<int>(data[i].target.size());
        s.steps = d.steps;
        s.emitted = d.emitted;
        s.termination = d.termination;
        s.predicted = as_strings(vocab, d.subsequences);
        score(s, gold_strings(data[i]));
      });
      const double secs = std::chrono::duration<double>(Clock::now() - start).count();
      if (pass == 0 || secs < rep.seconds) rep.seconds = secs;
      rep.peak_rss_kb = peak_rss_kb();
    }
  }
  for (auto& rep : report.regimes) {
    rep.throughput = rep.seconds > 0 ? static_cast<double>(data.size()) / rep.seconds : 0;
  }

  const MetricReport* base = nullptr;
  for (const auto& r : report.regimes) {
    if (r.name == report.baseline) base = &r;
  }
  if (!report.baseline.empty() && !base) {
    throw ConfigError("baseline regime " + report.baseline + " is not part of the run");
  }

  for (auto& rep : report.regimes) {
    std::map<int, double> base_steps, own_steps;
    double base_total = 0, own_total = 0;
    for (auto& s : rep.examples) {
      accumulate(rep.overall, s);
      accumulate(rep.groups[s.n], s);
      own_total += s.steps;
      own_steps[s.n] += s.steps;
      if (base) {
        const int b = base->examples[s.index].steps;
        s.step_speedup = s.steps > 0 ? static_cast<double>(b) / s.steps : 0;
        base_total += b;
        base_steps[s.n] += b;
      }
    }
    finish(rep.overall);
    for (auto& [n, g] : rep.groups) {
      finish(g);
      if (base && own_steps[n] > 0) g.step_speedup = base_steps[n] / own_steps[n];
    }
    if (base) {
      rep.overall.step_speedup = own_total > 0 ? base_total / own_total : 0;
      rep.wall_speedup = rep.seconds > 0 ? base->seconds / rep.seconds : 0;
    }
  }
  return report;
}

nlohmann::json BenchReport::metadata() const {
  nlohmann::json regs = nlohmann::json::array();
  for (const auto& r : regimes) {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [n, g] : r.groups) {
      groups[std::to_string(n)] = {{"count", g.count},
                                   {"mean_steps", g.steps},
                                   {"em_f1", g.em_f1},
                                   {"step_speedup", g.step_speedup}};
    }
    regs.push_back({{"name", r.name},
                    {"regime", regime_name(r.regime)},
                    {"delay", r.delay},
                    {"examples", r.overall.count},
                    {"mean_steps", r.overall.steps},
                    {"step_speedup", r.overall.step_speedup},
                    {"em_f1", r.overall.em_f1},
                    {"pm_f1", r.overall.pm_f1},
                    {"f1_at_5", r.overall.f1_at_5},
                    {"f1_at_m", r.overall.f1_at_m},
                    {"rouge1", r.overall.rouge1},
                    {"rouge2", r.overall.rouge2},
                    {"rouge_l", r.overall.rouge_l},
                    {"throughput", r.throughput},
                    {"wall_speedup", r.wall_speedup},
                    {"peak_rss_kb", r.peak_rss_kb},
                    {"groups", groups}});
  }
  return {{"format", "pipedec-bench"},
          {"version", 1},
          {"baseline", baseline},
          {"metrics",
           {{"em", "set exact match F1"},
            {"pm", "mean best character longest-common-substring ratio, per prediction and per gold"},
            {"f1_at_5", "normalized exact match, truncated or padded with wrong entries to 5"},
            {"f1_at_m", "normalized exact match over all predictions"},
            {"rouge", "word n-gram and LCS F1 over subsequences joined by spaces"},
            {"peak_rss", "process peak resident set, informational"}}},
          {"regimes", regs}};
}

void write_csv(std::ostream& os, const BenchReport& report, int min_group, bool wall_clock) {
  os << "regime,kind,delay,group,count,mean_steps,step_speedup,em_f1,pm_f1,f1_at_5,f1_at_m,"
        "rouge1,rouge2,rouge_l";
  if (wall_clock) os << ",throughput,wall_speedup,seconds,peak_rss_kb";
  os << '\n';
  for (const auto& r : report.regimes) {
    auto row = [&](const std::string& group, const ScoreMeans& m, bool with_wall) {
      os << r.name << ',' << regime_name(r.regime) << ',' << r.delay << ',' << group << ','
         << m.count << ',' << fmt(m.steps) << ',' << fmt(m.step_speedup) << ',' << fmt(m.em_f1)
         << ',' << fmt(m.pm_f1) << ',' << fmt(m.f1_at_5) << ',' << fmt(m.f1_at_m) << ','
         << fmt(m.rouge1) << ',' << fmt(m.rouge2) << ',' << fmt(m.rouge_l);
      if (wall_clock) {
        if (with_wall) {
          os << ',' << fmt(r.throughput) << ',' << fmt(r.wall_speedup) << ',' << fmt(r.seconds)
             << ',' << r.peak_rss_kb;
        } else {
          os << ",,,,";
        }
      }
      os << '\n';
    };
    row("all", r.overall, true);
    for (const auto& [n, g] : r.groups) {
      if (g.count >= min_group) row(std::to_string(n), g, false);
    }
  }
}

void write_speedup_plot(std::ostream& os, const BenchReport& report, int min_group) {
  for (const auto& r : report.regimes) {
    if (r.regime != Regime::kPipelined) continue;
    os << "# " << r.name << " delay=" << r.delay << '\n';
    for (const auto& [n, g] : r.groups) {
      if (g.count >= min_group) os << n << ' ' << fmt(g.step_speedup) << '\n';
    }
    os << '\n';
  }
}

void write_delay_sweep_plot(std::ostream& os, const BenchReport& report) {
  os << "# delay em_f1 throughput step_speedup\n";
  for (const auto& r : report.regimes) {
    if (r.regime != Regime::kPipelined) continue;
    os << r.delay << ' ' << fmt(r.overall.em_f1) << ' ' << fmt(r.throughput) << ' '
       << fmt(r.overall.step_speedup) << '\n';
  }
}

long peak_rss_kb() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return usage.ru_maxrss;
}

}  // namespace pipedec
