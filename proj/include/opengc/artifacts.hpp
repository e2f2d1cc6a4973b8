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

// Persistence of condensed graphs and evaluation metrics.
//
//   <dir>/condensed.bin  OGCF matrix X' (N' x d)
//   <dir>/labels.tsv     node <TAB> label
//   <dir>/meta.json      task, seed, config hash, ratio, log_tau, metrics
//
//   metrics.json         performance_matrix (m x m row-major, null where
//                        undefined), per_task_accuracy (row averages),
//                        map, config_hash, seeds

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "opengc/condenser.hpp"
#include "opengc/dataset_io.hpp"
#include "opengc/error.hpp"
#include "opengc/evaluation.hpp"

namespace opengc {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_condensed(const CondensedGraph& g, const fs::path& dir) {
  fs::create_directories(dir);
  write_ogcf(dir / "condensed.bin", g.features);
  std::ofstream labels(dir / "labels.tsv");
  for (std::size_t i = 0; i < g.labels.size(); ++i) labels << i << '\t' << g.labels[i] << '\n';

  nlohmann::ordered_json meta;
  meta["task"] = g.task;
  meta["seed"] = g.seed;
  meta["config_hash"] = hex64(g.config_hash);
  meta["ratio"] = g.ratio;
  meta["num_nodes"] = g.num_nodes();
  meta["num_classes"] = g.num_classes;
  meta["source_nodes"] = g.source_nodes;
  meta["feature_dim"] = g.features.cols();
  meta["log_tau"] = g.log_tau;
  meta["metrics"] = {{"best_val_accuracy", g.metrics.best_val_accuracy},
                     {"iterations", g.metrics.iterations},
                     {"final_loss", g.metrics.final_loss}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
  if (!labels) throw DataError("failed writing condensed graph to " + dir.string());
}

inline CondensedGraph read_condensed(const fs::path& dir) {
  CondensedGraph g;
  g.features = read_ogcf(dir / "condensed.bin");
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw DataError("missing file " + (dir / "meta.json").string());
  try {
    const auto meta = nlohmann::json::parse(meta_in);
    g.task = meta.at("task").get<int>();
    g.seed = meta.at("seed").get<std::uint64_t>();
    g.config_hash = std::stoull(meta.at("config_hash").get<std::string>(), nullptr, 16);
    g.ratio = meta.at("ratio").get<double>();
    g.num_classes = meta.at("num_classes").get<int>();
    g.source_nodes = meta.at("source_nodes").get<std::size_t>();
    g.log_tau = meta.at("log_tau").get<double>();
    const auto& m = meta.at("metrics");
    g.metrics.best_val_accuracy = m.at("best_val_accuracy").get<double>();
    g.metrics.iterations = m.at("iterations").get<int>();
    g.metrics.final_loss = m.at("final_loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed meta.json: ") + e.what());
  }
  g.labels.assign(static_cast<std::size_t>(g.features.rows()), -1);
  std::ifstream labels_in(dir / "labels.tsv");
  if (!labels_in) throw DataError("missing file " + (dir / "labels.tsv").string());
  std::string line;
  while (std::getline(labels_in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    long long node = -1;
    long long label = -1;
    if (!(fields >> node >> label) || node < 0 ||
        node >= static_cast<long long>(g.labels.size()) || label < 0 ||
        label >= g.num_classes) {
      throw DataError("malformed record in labels.tsv: '" + line + "'");
    }
    g.labels[static_cast<std::size_t>(node)] = static_cast<int>(label);
  }
  for (int y : g.labels) {
    if (y < 0) throw DataError("labels.tsv does not cover every condensed node");
  }
  g.targets = one_hot(g.labels, g.num_classes);
  return g;
}

inline nlohmann::ordered_json metrics_json(const PerformanceMatrix& m, std::uint64_t hash,
                                           const std::vector<std::uint64_t>& seeds) {
  nlohmann::ordered_json out;
  nlohmann::ordered_json matrix = nlohmann::ordered_json::array();
  for (int i = 1; i <= m.num_tasks(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int j = 1; j <= m.num_tasks(); ++j) {
      const auto v = m.at(i, j);
      row.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
    }
    matrix.push_back(row);
  }
  out["num_tasks"] = m.num_tasks();
  out["first_task"] = m.first_task();
  out["performance_matrix"] = matrix;
  nlohmann::ordered_json per_task = nlohmann::ordered_json::array();
  for (int i = 1; i <= m.num_tasks(); ++i) {
    per_task.push_back(i < m.first_task() ? nlohmann::ordered_json(nullptr)
                                          : nlohmann::ordered_json(m.row_average(i)));
  }
  out["per_task_accuracy"] = per_task;
  out["map"] = map_score(m);
  out["config_hash"] = hex64(hash);
  out["seeds"] = seeds;
  return out;
}

/// Rebuilds the performance matrix from a metrics.json document.
inline PerformanceMatrix matrix_from_metrics(const nlohmann::json& j) {
  try {
    const auto& rows = j.at("performance_matrix");
    const int m = static_cast<int>(rows.size());
    int first = j.contains("first_task") ? j.at("first_task").get<int>() : 1;
    PerformanceMatrix out(m, first);
    for (int i = 1; i <= m; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i - 1));
      if (row.size() != static_cast<std::size_t>(m)) throw DataError("performance_matrix is not square");
      for (int j2 = i; j2 <= m; ++j2) {
        const auto& cell = row.at(static_cast<std::size_t>(j2 - 1));
        if (!cell.is_null() && i >= first) out.set(i, j2, cell.get<double>());
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics: ") + e.what());
  }
}

/// TSV rendering: a header, one line per defined cell, then the mAP line.
inline std::string render_tsv(const PerformanceMatrix& m) {
  std::ostringstream out;
  char buf[64];
  out << "condensed_task\teval_task\taccuracy\n";
  for (int i = m.first_task(); i <= m.num_tasks(); ++i) {
    for (int j = i; j <= m.num_tasks(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.6f", *m.at(i, j));
      out << i << '\t' << j << '\t' << buf << '\n';
    }
  }
  std::snprintf(buf, sizeof(buf), "%.6f", map_score(m));
  out << "mAP\t" << buf << '\n';
  return out.str();
}

}  // namespace opengc
