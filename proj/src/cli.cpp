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

#include "pipedec/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pipedec/bench.hpp"
#include "pipedec/data.hpp"
#include "pipedec/decoding.hpp"
#include "pipedec/errors.hpp"
#include "pipedec/model.hpp"
#include "pipedec/training.hpp"

namespace pipedec {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kRunFormatVersion = 1;

// Appends timestamped lines to <run>/log.txt and mirrors them to `err`.
class RunLog {
 public:
  RunLog(const fs::path& dir, std::ostream& err) : file_(dir / "log.txt", std::ios::app), err_(err) {}
  void operator()(const std::string& line) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    file_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << line << '\n';
    file_.flush();
    err_ << line << '\n';
  }

 private:
  std::ofstream file_;
  std::ostream& err_;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

json read_json(const fs::path& p) {
  require_file(p, "config file");
  std::ifstream in(p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("cannot parse " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2) << '\n';
  if (!out) throw IngestionError("cannot write " + p.string());
}

fs::path default_out(const std::string& command) {
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / command;
}

// Options shared by every subcommand. Values left unset on the command line
// come from the config file, then from built-in defaults.
struct Common {
  std::string config_path;
  std::string out;
  int workers = 0;
};

struct Overrides {
  json values = json::object();
  // Records `value` under section.key when the option was given.
  template <typename V>
  void set(CLI::Option* opt, const std::string& section, const std::string& key, const V& value) {
    if (opt->count() > 0) values[section][key] = value;
  }
};

// File values, then flag overrides, section by section.
json merged_config(const Common& c, const Overrides& o) {
  json cfg = c.config_path.empty() ? json::object() : read_json(c.config_path);
  if (!cfg.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [section, kv] : o.values.items()) {
    for (const auto& [k, v] : kv.items()) cfg[section][k] = v;
  }
  return cfg;
}

fs::path prepare_run_dir(const Common& c, const std::string& command, const json& cfg) {
  const fs::path dir = c.out.empty() ? default_out(command) : fs::path(c.out);
  fs::create_directories(dir);
  json snapshot = cfg;
  snapshot["command"] = command;
  snapshot["format_version"] = kRunFormatVersion;
  write_json(dir / "config.json", snapshot);
  return dir;
}

int worker_count(const Common& c, const json& cfg) {
  int w = c.workers;
  if (w <= 0) w = cfg.value("/bench/workers"_json_pointer, 0);
  if (w <= 0) w = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return w;
}

PipelineSchedule schedule_from(const json& cfg) {
  PipelineSchedule s;
  if (cfg.contains("schedule")) {
    const json& j = cfg["schedule"];
    s.delay = j.value("delay", s.delay);
    s.time_max = j.value("time_max", s.time_max);
    s.sub_max = j.value("sub_max", s.sub_max);
  }
  s.validate();
  return s;
}

// Locates checkpoint and vocabulary from a run directory or checkpoint path.
struct ModelFiles {
  fs::path checkpoint;
  fs::path vocab;
};

ModelFiles model_files(const std::string& where) {
  fs::path p(where);
  ModelFiles f;
  if (fs::is_directory(p)) {
    f.checkpoint = p / "model.ckpt";
    f.vocab = p / "vocab.txt";
  } else {
    f.checkpoint = p;
    f.vocab = p.parent_path() / "vocab.txt";
  }
  require_file(f.checkpoint, "checkpoint");
  require_file(f.vocab, "vocabulary");
  return f;
}

// ---- gen-data ------------------------------------------------------------

int cmd_gen_data(const Common& c, const json& cfg, std::ostream& out, std::ostream& err) {
  const SyntheticSpec spec = SyntheticSpec::from_json(cfg.value("data", json::object()));
  const int test_count = cfg.value("/data/test_count"_json_pointer, std::max(1, spec.count / 10));
  const fs::path dir = prepare_run_dir(c, "gen-data", cfg);
  RunLog log(dir, err);

  const auto train = generate(spec);
  SyntheticSpec held = spec;
  held.count = test_count;
  held.seed = spec.seed ^ 0x5bd1e995ULL;
  const auto test = generate(held);
  save_jsonl(dir / "train.jsonl", train);
  save_jsonl(dir / "test.jsonl", test);
  write_json(dir / "spec.json", spec.to_json());
  log("wrote " + std::to_string(train.size()) + " training and " + std::to_string(test.size()) +
      " test examples to " + dir.string());
  out << (dir / "train.jsonl").string() << '\n' << (dir / "test.jsonl").string() << '\n';
  return 0;
}

// ---- train ---------------------------------------------------------------

int cmd_train(const Common& c, json cfg, std::ostream& out, std::ostream& err) {
  const std::string data_path = cfg.value("/train/data"_json_pointer, std::string{});
  if (data_path.empty()) throw UsageError("train needs --data");
  require_file(data_path, "dataset");
  TrainConfig tc = TrainConfig::from_json(cfg.value("train", json::object()));
  tc.validate();
  ModelConfig mc = ModelConfig::from_json(cfg.value("model", json::object()));

  const fs::path dir = prepare_run_dir(c, "train", cfg);
  RunLog log(dir, err);
  const auto data = load_jsonl(data_path);
  if (data.empty()) throw DataError("dataset " + data_path + " is empty");
  const Vocab vocab = build_vocab(data, cfg.value("/train/min_count"_json_pointer, 1));
  vocab.save(dir / "vocab.txt");
  mc.vocab_size = vocab.size();
  mc.validate();

  Seq2SeqModel<float> model(mc, tc.seed);
  log("training " + regime_name(tc.regime) + " delay=" + std::to_string(tc.delay) + " on " +
      std::to_string(data.size()) + " examples, " + std::to_string(model.parameter_count()) +
      " parameters");
  const auto encoded = encode_dataset(data, vocab);
  FitHooks hooks;
  hooks.on_epoch = [&](int epoch, double loss) {
    std::ostringstream line;
    line << "epoch " << epoch << " loss " << std::setprecision(6) << loss;
    log(line.str());
  };
  const FitResult result = fit(model, std::span<const EncodedExample>(encoded), tc, hooks);
  json meta = run_metadata(tc, mc, vocab.hash_hex(), result);
  model.save(dir / "model.ckpt", {{"train", tc.to_json()}, {"vocab_hash", vocab.hash_hex()}});
  write_json(dir / "run.json", meta);
  log("saved " + (dir / "model.ckpt").string());
  out << (dir / "model.ckpt").string() << '\n';
  return 0;
}

// ---- decode --------------------------------------------------------------

int cmd_decode(const Common& c, const json& cfg, std::ostream& out, std::ostream& err) {
  const std::string model_path = cfg.value("/decode/model"_json_pointer, std::string{});
  const std::string input = cfg.value("/decode/input"_json_pointer, std::string{});
  if (model_path.empty() || input.empty()) throw UsageError("decode needs --model and --input");
  require_file(input, "input");
  const ModelFiles files = model_files(model_path);
  const Vocab vocab = Vocab::load(files.vocab);
  PipelineSchedule schedule = schedule_from(cfg);
  const bool delay_given = cfg.contains("/schedule/delay"_json_pointer);
  RegimeSpec spec = load_model_regime(files.checkpoint, "model", delay_given ? schedule.delay : 0);
  if (cfg.contains("/decode/regime"_json_pointer)) {
    spec.regime = parse_regime(cfg["decode"]["regime"].get<std::string>());
  }
  schedule.delay = spec.delay;
  const int max_len = cfg.value("/decode/max_len"_json_pointer, 256);

  const fs::path dir = prepare_run_dir(c, "decode", cfg);
  RunLog log(dir, err);
  const auto data = load_jsonl(input);
  const auto encoded = encode_dataset(data, vocab);
  std::ofstream trace(dir / "trace.jsonl");
  std::ofstream results(dir / "decoded.jsonl");
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    auto decoder = spec.make_decoder(i);
    const Decoded d = decode_example(*decoder, encoded[i].input, spec.regime, schedule, max_len);
    json subs = json::array();
    for (const auto& s : d.subsequences) subs.push_back(vocab.decode(s));
    const json line = {{"index", i}, {"subsequences", subs}, {"steps", d.steps},
                       {"termination", d.termination}};
    out << line.dump() << '\n';
    results << line.dump() << '\n';
    trace << json{{"example", i}}.dump() << '\n';
    write_trace(trace, d.trace);
  }
  log("decoded " + std::to_string(encoded.size()) + " examples with " + regime_name(spec.regime) +
      " delay=" + std::to_string(spec.delay));
  return 0;
}

// ---- eval / bench --------------------------------------------------------

std::vector<RegimeSpec> regimes_from(const json& cfg, const std::string& section,
                                     Vocab* vocab_out) {
  std::vector<RegimeSpec> specs;
  const json list = cfg.contains(section) ? cfg[section].value("models", json::array()) : json::array();
  if (list.empty()) throw UsageError(section + " needs at least one --model");
  std::string vocab_hash;
  for (const auto& m : list) {
    const ModelFiles files = model_files(m.get<std::string>());
    const Vocab vocab = Vocab::load(files.vocab);
    if (vocab_hash.empty()) {
      vocab_hash = vocab.hash_hex();
      *vocab_out = vocab;
    } else if (vocab.hash_hex() != vocab_hash) {
      throw ConfigError("models were trained with different vocabularies");
    }
    RegimeSpec spec = load_model_regime(files.checkpoint, m.get<std::string>());
    spec.name = regime_name(spec.regime) + (spec.regime == Regime::kPipelined
                                                ? "-d" + std::to_string(spec.delay)
                                                : std::string{});
    specs.push_back(std::move(spec));
  }
  return specs;
}

int cmd_bench(const Common& c, const json& cfg, const std::string& command, std::ostream& out,
              std::ostream& err) {
  const std::string data_file =
      cfg.contains(command) ? cfg[command].value("data", std::string{}) : std::string{};
  if (data_file.empty()) throw UsageError(command + " needs --data");
  require_file(data_file, "dataset");
  const PipelineSchedule schedule = schedule_from(cfg);
  Vocab vocab;
  const auto regimes = regimes_from(cfg, command, &vocab);

  const fs::path dir = prepare_run_dir(c, command, cfg);
  RunLog log(dir, err);
  const auto data = load_jsonl(data_file);
  BenchConfig bc;
  bc.schedule = schedule;
  bc.workers = worker_count(c, cfg);
  const json& section = cfg[command];
  bc.repeats = section.value("repeats", 1);
  bc.min_group = section.value("min_group", 10);
  bc.sequential_max_len = section.value("max_len", 256);
  const BenchReport report = run_benchmark(data, vocab, regimes, bc);
  // eval reports are reproducible; only bench adds timing columns by default.
  const bool wall = section.value("wall_clock", command == "bench");

  std::ofstream csv(dir / "report.csv");
  write_csv(csv, report, bc.min_group, wall);
  write_json(dir / "report.json", report.metadata());
  if (command == "bench") {
    std::ofstream speed(dir / "speedup_vs_n.dat");
    write_speedup_plot(speed, report, bc.min_group);
    std::ofstream sweep(dir / "delay_sweep.dat");
    write_delay_sweep_plot(sweep, report);
  }
  write_csv(out, report, bc.min_group, wall);
  log("wrote " + (dir / "report.csv").string());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"pipedec: pipelined and sequential seq2seq decoding"};
  app.require_subcommand(1);
  Common common;
  Overrides ov;
  app.add_option("--config", common.config_path, "JSON config file; flags override its values");
  app.add_option("--out", common.out,
                 std::string("Run directory (default $") + kOutputRootEnv + "/<command>)");
  app.add_option("--workers", common.workers, "Decode worker threads (default: all cores)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string spec_path;
  SyntheticSpec spec;
  int test_count = 0;
  gen->add_option("--spec", spec_path, "Synthetic task spec (JSON)");
  auto* o_task = gen->add_option("--task", spec.task, "span-copy or sentence-copy");
  auto* o_count = gen->add_option("--count", spec.count, "Training examples");
  auto* o_test = gen->add_option("--test-count", test_count, "Held-out examples");
  auto* o_gseed = gen->add_option("--seed", spec.seed, "Generator seed");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_data, regime;
  TrainConfig tc;
  ModelConfig mc;
  auto* o_tdata = train->add_option("--data", train_data, "Training JSONL");
  auto* o_regime = train->add_option("--regime", regime, "sequential or pipelined");
  auto* o_delay = train->add_option("--delay", tc.delay, "Delay between subsequences");
  auto* o_epochs = train->add_option("--epochs", tc.epochs);
  auto* o_batch = train->add_option("--batch-size", tc.batch_size);
  auto* o_lr = train->add_option("--lr", tc.lr);
  auto* o_tseed = train->add_option("--seed", tc.seed);
  auto* o_explore = train->add_flag("--exploration-targets", tc.exploration_targets,
                                    "Also train the empty subsequences decoding establishes");
  auto* o_layers = train->add_option("--layers", mc.num_layers);
  auto* o_dim = train->add_option("--dim", mc.model_dim);
  auto* o_heads = train->add_option("--heads", mc.num_heads);
  auto* o_ff = train->add_option("--ff-dim", mc.ff_dim);
  auto* o_drop = train->add_option("--dropout", mc.dropout);

  // decode
  auto* decode = app.add_subcommand("decode", "Decode a JSONL file with a trained model");
  std::string model_path, input_path, decode_regime;
  PipelineSchedule sched;
  auto* o_model = decode->add_option("--model", model_path, "Run directory or checkpoint");
  auto* o_input = decode->add_option("--input", input_path, "Examples (JSONL)");
  auto* o_dregime = decode->add_option("--regime", decode_regime, "Override the trained regime");
  auto* o_ddelay = decode->add_option("--delay", sched.delay, "Override the trained delay");
  auto* o_tmax = decode->add_option("--time-max", sched.time_max);
  auto* o_smax = decode->add_option("--sub-max", sched.sub_max);

  // eval and bench
  std::vector<std::string> eval_models, bench_models;
  std::string eval_data, bench_data;
  int repeats = 1;
  bool no_wall = false;
  auto* eval = app.add_subcommand("eval", "Score trained models on a dataset");
  auto* o_emodels = eval->add_option("--model", eval_models, "Run directories or checkpoints")->expected(1, -1);
  auto* o_edata = eval->add_option("--data", eval_data, "Examples (JSONL)");
  auto* bench = app.add_subcommand("bench", "Compare regimes for speed and quality");
  auto* o_bmodels = bench->add_option("--model", bench_models, "Run directories or checkpoints")->expected(1, -1);
  auto* o_bdata = bench->add_option("--data", bench_data, "Examples (JSONL)");
  auto* o_rep = bench->add_option("--repeats", repeats, "Timed passes; the fastest is reported");
  bench->add_flag("--no-wall-clock", no_wall, "Omit machine-dependent columns");
  for (auto* sub : {eval, bench}) {
    sub->add_option("--time-max", sched.time_max);
    sub->add_option("--sub-max", sched.sub_max);
  }

  std::vector<std::string> argv_store{"pipedec"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << "run with --help for usage\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      json base = spec_path.empty() ? json::object() : read_json(spec_path);
      ov.values["data"] = base.is_object() ? base : json::object();
      ov.set(o_task, "data", "task", spec.task);
      ov.set(o_count, "data", "count", spec.count);
      ov.set(o_test, "data", "test_count", test_count);
      ov.set(o_gseed, "data", "seed", spec.seed);
      return cmd_gen_data(common, merged_config(common, ov), out, err);
    }
    if (train->parsed()) {
      ov.set(o_tdata, "train", "data", train_data);
      ov.set(o_regime, "train", "regime", regime);
      ov.set(o_delay, "train", "delay", tc.delay);
      ov.set(o_epochs, "train", "epochs", tc.epochs);
      ov.set(o_batch, "train", "batch_size", tc.batch_size);
      ov.set(o_lr, "train", "lr", tc.lr);
      ov.set(o_tseed, "train", "seed", tc.seed);
      ov.set(o_explore, "train", "exploration_targets", tc.exploration_targets);
      ov.set(o_layers, "model", "num_layers", mc.num_layers);
      ov.set(o_dim, "model", "model_dim", mc.model_dim);
      ov.set(o_heads, "model", "num_heads", mc.num_heads);
      ov.set(o_ff, "model", "ff_dim", mc.ff_dim);
      ov.set(o_drop, "model", "dropout", mc.dropout);
      return cmd_train(common, merged_config(common, ov), out, err);
    }
    if (decode->parsed()) {
      ov.set(o_model, "decode", "model", model_path);
      ov.set(o_input, "decode", "input", input_path);
      ov.set(o_dregime, "decode", "regime", decode_regime);
      ov.set(o_ddelay, "schedule", "delay", sched.delay);
      ov.set(o_tmax, "schedule", "time_max", sched.time_max);
      ov.set(o_smax, "schedule", "sub_max", sched.sub_max);
      return cmd_decode(common, merged_config(common, ov), out, err);
    }
    const bool is_bench = bench->parsed();
    const std::string command = is_bench ? "bench" : "eval";
    auto* sub = is_bench ? bench : eval;
    ov.set(is_bench ? o_bmodels : o_emodels, command, "models", is_bench ? bench_models : eval_models);
    ov.set(is_bench ? o_bdata : o_edata, command, "data", is_bench ? bench_data : eval_data);
    if (is_bench) {
      ov.set(o_rep, command, "repeats", repeats);
      if (no_wall) ov.values[command]["wall_clock"] = false;
    }
    ov.set(sub->get_option("--time-max"), "schedule", "time_max", sched.time_max);
    ov.set(sub->get_option("--sub-max"), "schedule", "sub_max", sched.sub_max);
    return cmd_bench(common, merged_config(common, ov), command, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace pipedec
