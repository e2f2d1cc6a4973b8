// Copyright 2026 The OpenGC Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// opengc command line:
//
//   generate --preset <name> --out <dir> --seed <n>
//   condense --data <dir> --task <t> [--ratio <r>] [--config <file>] [--out <dir>] --seed <n>
//   evaluate --data <dir> [--from-task <t>] [--config <file>]
//            [--openset softmax|openmax] [--whole] --out <file> --seed <n>
//   report   --metrics <file> [--format tsv|json]
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical failure. OPENGC_THREADS caps worker threads (default 1).

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "opengc/artifacts.hpp"
#include "opengc/config.hpp"
#include "opengc/datagen.hpp"
#include "opengc/dataset_io.hpp"
#include "opengc/evaluation.hpp"

namespace opengc {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Thread count after applying the OPENGC_THREADS cap.
inline int effective_threads(int requested) {
  int threads = std::max(1, requested);
  if (const char* env = std::getenv("OPENGC_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) threads = std::min(threads, cap);
  }
  return threads;
}

/// Split seed shared by `condense` and `evaluate` for a given --seed.
inline std::uint64_t split_seed(std::uint64_t seed) { return derive_seed(seed, 0x5917); }

namespace detail {

inline RunConfig load_run_config(const std::string& config_path) {
  RunConfig cfg;
  if (!config_path.empty()) parse_config_file(cfg, config_path);
  return cfg;
}

inline int cmd_generate(const std::string& preset, const std::string& out, std::uint64_t seed,
                        std::ostream& log) {
  const TaskSequence seq = generate_drift_sbm(drift_sbm_preset(preset, seed));
  write_dataset(seq, out);
  log << "wrote " << seq.num_tasks() << " tasks, " << seq.snapshots.back().num_nodes
      << " nodes, " << seq.snapshots.back().num_edges() << " edges to " << out << '\n';
  return kOk;
}

inline int cmd_condense(RunConfig cfg, int task, std::optional<double> ratio,
                        std::uint64_t seed, std::ostream& log) {
  auto& c = cfg.eval.condense;
  if (ratio) c.ratio = *ratio;
  c.seed = seed;
  c.threads = effective_threads(c.threads);
  validate(cfg);
  const TaskSequence seq = load_sequence(cfg.dataset);
  const SplitMask splits = make_splits(seq, SplitRatios{}, split_seed(seed));
  const CondensedGraph g = condense(seq, splits, task, c);
  write_condensed(g, cfg.output);
  log << "condensed task " << task << ": " << seq.task(task).num_nodes << " -> "
      << g.num_nodes() << " nodes, best validation accuracy " << g.metrics.best_val_accuracy
      << " after " << g.metrics.iterations << " iterations\n";
  return kOk;
}

inline int cmd_evaluate(RunConfig cfg, bool whole, std::uint64_t seed, std::ostream& log) {
  cfg.eval.condense.seed = seed;
  cfg.eval.condense.threads = effective_threads(cfg.eval.condense.threads);
  validate(cfg);
  const TaskSequence seq = load_sequence(cfg.dataset);
  if (cfg.eval.first_task > seq.num_tasks()) {
    throw ConfigError("from-task exceeds the number of tasks");
  }
  const SplitMask splits = make_splits(seq, SplitRatios{}, split_seed(seed));
  const PerformanceMatrix m = whole ? evaluate_whole_graph(seq, splits, cfg.eval)
                                    : evaluate_sequence(seq, splits, cfg.eval);
  const auto doc = metrics_json(m, config_hash(cfg.eval.condense), {seed});
  std::ofstream out(cfg.output);
  if (!out) throw DataError("cannot write " + cfg.output);
  out << doc.dump(2) << '\n';
  log << render_tsv(m);
  return kOk;
}

inline int cmd_report(const std::string& metrics_path, const std::string& format,
                      std::ostream& out) {
  std::ifstream in(metrics_path);
  if (!in) throw DataError("missing file " + metrics_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics: ") + e.what());
  }
  const PerformanceMatrix m = matrix_from_metrics(doc);
  if (format == "tsv") {
    out << render_tsv(m);
  } else {
    nlohmann::ordered_json summary;
    summary["performance_matrix"] = doc.at("performance_matrix");
    summary["map"] = map_score(m);
    out << summary.dump(2) << '\n';
  }
  return kOk;
}

}  // namespace detail

/// Runs the command line; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Temporal-invariance graph condensation for evolving graphs", "opengc"};
  app.require_subcommand(1);

  std::string preset, out_path, data, config_path, openset_mode, metrics_path;
  std::string format = "tsv";
  std::uint64_t seed = 0;
  int task = 1;
  int from_task = 1;
  double ratio = 0.0;
  bool whole = false;

  auto* generate = app.add_subcommand("generate", "Write a synthetic evolving-graph dataset");
  generate->add_option("--preset", preset, "paper-analog | small | tiny")->required();
  generate->add_option("--out", out_path, "Output dataset directory")->required();
  generate->add_option("--seed", seed, "Generator seed")->required();

  auto* cond = app.add_subcommand("condense", "Condense one task of a dataset");
  cond->add_option("--data", data, "Dataset directory")->required();
  cond->add_option("--task", task, "1-based task to condense")->required();
  auto* ratio_opt = cond->add_option("--ratio", ratio, "Compress ratio N'/N");
  cond->add_option("--config", config_path, "key=value config file");
  cond->add_option("--out", out_path, "Output directory (default <data>/condensed_task<t>)");
  cond->add_option("--seed", seed, "Run seed")->required();

  auto* eval = app.add_subcommand("evaluate", "Run the sequential open-set protocol");
  eval->add_option("--data", data, "Dataset directory")->required();
  auto* from_opt = eval->add_option("--from-task", from_task, "First condensation task");
  eval->add_option("--config", config_path, "key=value config file");
  auto* openset_opt = eval->add_option("--openset", openset_mode, "softmax | openmax")
                          ->check(CLI::IsMember({"softmax", "openmax"}));
  auto* eval_ratio = eval->add_option("--ratio", ratio, "Compress ratio N'/N");
  eval->add_flag("--whole", whole, "Train on the whole graph instead of the condensed one");
  eval->add_option("--out", out_path, "metrics.json path")->required();
  eval->add_option("--seed", seed, "Run seed")->required();

  auto* report = app.add_subcommand("report", "Render a metrics file");
  report->add_option("--metrics", metrics_path, "metrics.json path")->required();
  report->add_option("--format", format, "tsv | json")->check(CLI::IsMember({"tsv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return kUsage;
  }

  try {
    if (*generate) return detail::cmd_generate(preset, out_path, seed, err);
    if (*cond) {
      RunConfig cfg = detail::load_run_config(config_path);
      cfg.dataset = data;
      cfg.output = out_path.empty()
                       ? (fs::path(data) / ("condensed_task" + std::to_string(task))).string()
                       : out_path;
      std::optional<double> r;
      if (*ratio_opt) r = ratio;
      return detail::cmd_condense(std::move(cfg), task, r, seed, err);
    }
    if (*eval) {
      RunConfig cfg = detail::load_run_config(config_path);
      cfg.dataset = data;
      cfg.output = out_path;
      if (*from_opt) cfg.eval.first_task = from_task;
      if (*openset_opt) cfg.eval.openset.mode = parse_openset_mode(openset_mode);
      if (*eval_ratio) cfg.eval.condense.ratio = ratio;
      return detail::cmd_evaluate(std::move(cfg), whole, seed, out);
    }
    return detail::cmd_report(metrics_path, format, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const PreconditionError& e) {
    err << "invalid request: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
}

}  // namespace opengc
