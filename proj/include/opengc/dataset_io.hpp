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

// On-disk dataset layout:
//
//   manifest.json  {"num_tasks", "node_counts": [...], "class_counts": [...],
//                   "feature_dim"}; counts are cumulative per task
//   nodes.tsv      id <TAB> label <TAB> arrival_task
//   edges.tsv      src <TAB> dst <TAB> arrival_task
//   features.bin   OGCF matrix, N_final x feature_dim
//
// OGCF is a 16-byte header ("OGCF", u32 rows, u32 cols, u32 reserved = 0)
// followed by row-major little-endian float32 values.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "opengc/dense.hpp"
#include "opengc/error.hpp"
#include "opengc/graph.hpp"

namespace opengc {

static_assert(std::endian::native == std::endian::little,
              "OGCF I/O assumes a little-endian host");

namespace fs = std::filesystem;

inline void write_ogcf(const fs::path& path, const DenseMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::array<std::uint32_t, 3> dims = {
      static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()), 0};
  out.write("OGCF", 4);
  out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
  std::vector<float> buffer(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    buffer[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  }
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  if (!out) throw DataError("failed writing " + path.string());
}

inline DenseMatrix read_ogcf(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file " + path.string());
  char magic[4] = {};
  std::array<std::uint32_t, 3> dims{};
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
  if (!in || std::memcmp(magic, "OGCF", 4) != 0) {
    throw DataError("bad OGCF header in " + path.string());
  }
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1];
  std::vector<float> buffer(count);
  in.read(reinterpret_cast<char*>(buffer.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw DataError("truncated OGCF payload in " + path.string());
  DenseMatrix m(dims[0], dims[1]);
  for (std::size_t i = 0; i < count; ++i) m.data()[i] = buffer[i];
  return m;
}

struct Manifest {
  int num_tasks = 0;
  std::vector<std::size_t> node_counts;
  std::vector<int> class_counts;
  std::size_t feature_dim = 0;
};

inline Manifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("missing file " + (dir / "manifest.json").string());
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.num_tasks = j.at("num_tasks").get<int>();
    m.node_counts = j.at("node_counts").get<std::vector<std::size_t>>();
    m.class_counts = j.at("class_counts").get<std::vector<int>>();
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  if (m.num_tasks < 1 || m.node_counts.size() != static_cast<std::size_t>(m.num_tasks) ||
      m.class_counts.size() != static_cast<std::size_t>(m.num_tasks)) {
    throw DataError("malformed manifest: per-task counts do not match num_tasks");
  }
  for (int t = 1; t < m.num_tasks; ++t) {
    if (m.node_counts[t] < m.node_counts[t - 1] ||
        m.class_counts[t] < m.class_counts[t - 1]) {
      throw DataError("malformed manifest: counts must be non-decreasing");
    }
  }
  return m;
}

namespace detail {

// Reads tab-separated rows of exactly three non-negative integers. Blank
// lines and lines starting with '#' are skipped.
inline std::vector<std::array<long long, 3>> read_triples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  std::vector<std::array<long long, 3>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::array<long long, 3> row{};
    std::string extra;
    if (!(fields >> row[0] >> row[1] >> row[2]) || (fields >> extra) ||
        row[0] < 0 || row[1] < 0 || row[2] < 0) {
      throw DataError("malformed record at " + path.filename().string() + ":" +
                      std::to_string(line_no));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

/// Loads the cumulative snapshot for 1-based `task`: nodes with id < N_task
/// and edges tagged with arrival_task <= task. Input self-loops are dropped,
/// duplicates removed and directed rows symmetrized.
inline GraphSnapshot load_snapshot(const fs::path& dir, int task) {
  const Manifest manifest = read_manifest(dir);
  if (task < 1 || task > manifest.num_tasks) {
    throw DataError("task " + std::to_string(task) + " not in dataset");
  }
  const std::size_t n_final = manifest.node_counts.back();
  const std::size_t n = manifest.node_counts[static_cast<std::size_t>(task - 1)];
  const int num_classes = manifest.class_counts[static_cast<std::size_t>(task - 1)];

  GraphSnapshot s;
  s.task_index = task;
  s.num_nodes = n;
  s.num_classes = num_classes;
  s.labels.assign(n, -1);
  s.node_arrival_task.assign(n, 0);
  std::vector<int> arrival_all(n_final, 0);

  for (const auto& [id, label, arrival] : detail::read_triples(dir / "nodes.tsv")) {
    if (static_cast<std::size_t>(id) >= n_final) {
      throw DataError("node id " + std::to_string(id) + " >= declared node count");
    }
    if (arrival < 1 || arrival > manifest.num_tasks) {
      throw DataError("node " + std::to_string(id) + " has invalid arrival task");
    }
    arrival_all[static_cast<std::size_t>(id)] = static_cast<int>(arrival);
    if (static_cast<std::size_t>(id) >= n) continue;
    if (arrival > task) throw DataError("node arrival inconsistent with node counts");
    if (label >= num_classes) {
      throw DataError("label out of range: node " + std::to_string(id) + " has label " +
                      std::to_string(label) + " but task " + std::to_string(task) +
                      " declares " + std::to_string(num_classes) + " classes");
    }
    s.labels[static_cast<std::size_t>(id)] = static_cast<int>(label);
    s.node_arrival_task[static_cast<std::size_t>(id)] = static_cast<int>(arrival);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (s.labels[i] < 0) throw DataError("node " + std::to_string(i) + " missing from nodes.tsv");
  }

  std::vector<Edge> edges;
  for (const auto& [src, dst, arrival] : detail::read_triples(dir / "edges.tsv")) {
    if (static_cast<std::size_t>(src) >= n_final || static_cast<std::size_t>(dst) >= n_final) {
      throw DataError("edge endpoint >= declared node count");
    }
    if (arrival > task) continue;
    if (static_cast<std::size_t>(src) >= n || static_cast<std::size_t>(dst) >= n ||
        arrival < arrival_all[static_cast<std::size_t>(src)] ||
        arrival < arrival_all[static_cast<std::size_t>(dst)]) {
      throw DataError("edge (" + std::to_string(src) + "," + std::to_string(dst) +
                      ") precedes the arrival of an endpoint");
    }
    edges.emplace_back(static_cast<NodeId>(src), static_cast<NodeId>(dst));
  }
  s.adjacency = build_undirected_adjacency(n, edges);

  const DenseMatrix features = read_ogcf(dir / "features.bin");
  if (static_cast<std::size_t>(features.rows()) != n_final) {
    throw DataError("feature row count mismatch: features.bin has " +
                    std::to_string(features.rows()) + " rows, manifest declares " +
                    std::to_string(n_final));
  }
  if (static_cast<std::size_t>(features.cols()) != manifest.feature_dim) {
    throw DataError("feature column count does not match feature_dim");
  }
  s.features = features.topRows(static_cast<Eigen::Index>(n));
  validate(s);
  return s;
}

inline TaskSequence load_sequence(const fs::path& dir) {
  const Manifest manifest = read_manifest(dir);
  TaskSequence seq;
  for (int t = 1; t <= manifest.num_tasks; ++t) {
    seq.snapshots.push_back(load_snapshot(dir, t));
  }
  validate(seq);
  return seq;
}

/// Writes `seq` in the dataset layout. Edge arrival tags are the first task
/// whose snapshot contains the edge.
inline void write_dataset(const TaskSequence& seq, const fs::path& dir) {
  detail::require(seq.num_tasks() >= 1, "write_dataset: empty sequence");
  fs::create_directories(dir);
  const GraphSnapshot& last = seq.snapshots.back();

  nlohmann::json manifest;
  manifest["num_tasks"] = seq.num_tasks();
  std::vector<std::size_t> node_counts;
  std::vector<int> class_counts;
  for (const auto& s : seq.snapshots) {
    node_counts.push_back(s.num_nodes);
    class_counts.push_back(s.num_classes);
  }
  manifest["node_counts"] = node_counts;
  manifest["class_counts"] = class_counts;
  manifest["feature_dim"] = last.feature_dim();
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";

  std::ofstream nodes(dir / "nodes.tsv");
  for (std::size_t i = 0; i < last.num_nodes; ++i) {
    nodes << i << '\t' << last.labels[i] << '\t' << last.node_arrival_task[i] << '\n';
  }

  std::ofstream edges(dir / "edges.tsv");
  for (auto [u, v] : undirected_edges(last.adjacency)) {
    int arrival = last.task_index;
    for (const auto& s : seq.snapshots) {
      if (v < s.num_nodes && s.adjacency.at(u, v) != 0.0) {
        arrival = s.task_index;
        break;
      }
    }
    edges << u << '\t' << v << '\t' << arrival << '\n';
  }
  if (!nodes || !edges) throw DataError("failed writing dataset to " + dir.string());
  write_ogcf(dir / "features.bin", last.features);
}

}  // namespace opengc
