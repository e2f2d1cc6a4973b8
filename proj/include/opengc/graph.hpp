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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "opengc/dense.hpp"
#include "opengc/error.hpp"
#include "opengc/rng.hpp"

namespace opengc {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Compressed sparse row matrix with sorted column indices per row.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<NodeId> indices;
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }
  std::size_t row_size(std::size_t r) const {
    return offsets[r + 1] - offsets[r];
  }

  /// Stored value at (r, c), or 0 when absent.
  double at(std::size_t r, std::size_t c) const {
    const auto first = indices.begin() + static_cast<std::ptrdiff_t>(offsets[r]);
    const auto last = indices.begin() + static_cast<std::ptrdiff_t>(offsets[r + 1]);
    auto it = std::lower_bound(first, last, static_cast<NodeId>(c));
    if (it == last || *it != c) return 0.0;
    return values[static_cast<std::size_t>(it - indices.begin())];
  }

  DenseMatrix to_dense() const {
    DenseMatrix out = DenseMatrix::Zero(static_cast<Eigen::Index>(rows),
                                        static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
        out(static_cast<Eigen::Index>(r), indices[k]) = values[k];
      }
    }
    return out;
  }
};

/// Unit-weight undirected adjacency over `num_nodes` nodes. Self-loops are
/// dropped, each edge is stored in both directions and duplicates collapse.
inline CsrMatrix build_undirected_adjacency(std::size_t num_nodes,
                                            std::span<const Edge> edges) {
  std::vector<Edge> arcs;
  arcs.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) {
      throw DataError("edge endpoint " + std::to_string(std::max(u, v)) +
                      " >= node count " + std::to_string(num_nodes));
    }
    if (u == v) continue;
    arcs.emplace_back(u, v);
    arcs.emplace_back(v, u);
  }
  std::sort(arcs.begin(), arcs.end());
  arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());

  CsrMatrix adj;
  adj.rows = adj.cols = num_nodes;
  adj.offsets.assign(num_nodes + 1, 0);
  adj.indices.reserve(arcs.size());
  for (auto [u, v] : arcs) {
    ++adj.offsets[u + 1];
    adj.indices.push_back(v);
  }
  for (std::size_t r = 0; r < num_nodes; ++r) adj.offsets[r + 1] += adj.offsets[r];
  adj.values.assign(arcs.size(), 1.0);
  return adj;
}

/// Each undirected edge once, as (u, v) with u < v, in CSR order.
inline std::vector<Edge> undirected_edges(const CsrMatrix& adj) {
  std::vector<Edge> out;
  out.reserve(adj.nnz() / 2);
  for (std::size_t r = 0; r < adj.rows; ++r) {
    for (std::size_t k = adj.offsets[r]; k < adj.offsets[r + 1]; ++k) {
      if (r < adj.indices[k]) out.emplace_back(static_cast<NodeId>(r), adj.indices[k]);
    }
  }
  return out;
}

/// The cumulative graph after task `task_index` (1-based).
struct GraphSnapshot {
  int task_index = 1;
  std::size_t num_nodes = 0;
  CsrMatrix adjacency;
  DenseMatrix features;
  std::vector<int> labels;
  std::vector<int> node_arrival_task;
  int num_classes = 0;

  std::size_t num_edges() const { return adjacency.nnz() / 2; }
  std::size_t degree(std::size_t node) const { return adjacency.row_size(node); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
};

/// Throws DataError unless the snapshot satisfies its structural invariants.
inline void validate(const GraphSnapshot& s) {
  const auto n = s.num_nodes;
  if (s.adjacency.rows != n || s.adjacency.cols != n ||
      s.adjacency.offsets.size() != n + 1) {
    throw DataError("adjacency shape does not match node count");
  }
  if (static_cast<std::size_t>(s.features.rows()) != n) {
    throw DataError("feature row count mismatch");
  }
  if (s.labels.size() != n || s.node_arrival_task.size() != n) {
    throw DataError("label/arrival vectors do not match node count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (s.labels[i] < 0 || s.labels[i] >= s.num_classes) {
      throw DataError("label out of range at node " + std::to_string(i));
    }
    if (s.node_arrival_task[i] < 1 || s.node_arrival_task[i] > s.task_index) {
      throw DataError("node " + std::to_string(i) + " arrives after its snapshot");
    }
  }
  const auto& a = s.adjacency;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = a.offsets[r]; k < a.offsets[r + 1]; ++k) {
      const auto c = a.indices[k];
      if (c == r) throw DataError("stored self-loop");
      if (k > a.offsets[r] && a.indices[k - 1] >= c) {
        throw DataError("unsorted or duplicate adjacency entry");
      }
      if (a.at(c, r) != a.values[k]) throw DataError("adjacency not symmetric");
    }
  }
  if (!all_finite(s.features)) throw DataError("non-finite features");
}

/// Ordered cumulative snapshots T_1 ⊂ T_2 ⊂ ... ⊂ T_m.
struct TaskSequence {
  std::vector<GraphSnapshot> snapshots;

  int num_tasks() const { return static_cast<int>(snapshots.size()); }

  /// Snapshot for 1-based task ordinal `t`.
  const GraphSnapshot& task(int t) const {
    detail::require(t >= 1 && t <= num_tasks(), "TaskSequence::task: out of range");
    return snapshots[static_cast<std::size_t>(t - 1)];
  }
};

/// Validates every snapshot plus the cross-task prefix and monotonicity
/// invariants.
inline void validate(const TaskSequence& seq) {
  for (int t = 1; t <= seq.num_tasks(); ++t) {
    const auto& s = seq.task(t);
    validate(s);
    if (s.task_index != t) throw DataError("snapshot task index out of order");
    if (t == 1) continue;
    const auto& prev = seq.task(t - 1);
    if (s.num_nodes < prev.num_nodes) throw DataError("node set shrinks");
    if (s.num_classes < prev.num_classes) throw DataError("class count decreases");
    if (s.features.cols() != prev.features.cols()) {
      throw DataError("feature dimension changes across tasks");
    }
    for (std::size_t i = 0; i < prev.num_nodes; ++i) {
      if (s.labels[i] != prev.labels[i] ||
          s.node_arrival_task[i] != prev.node_arrival_task[i] ||
          s.features.row(static_cast<Eigen::Index>(i)) !=
              prev.features.row(static_cast<Eigen::Index>(i))) {
        throw DataError("snapshot " + std::to_string(t - 1) +
                        " is not a prefix of snapshot " + std::to_string(t));
      }
    }
    for (std::size_t r = 0; r < prev.num_nodes; ++r) {
      for (std::size_t k = prev.adjacency.offsets[r];
           k < prev.adjacency.offsets[r + 1]; ++k) {
        if (s.adjacency.at(r, prev.adjacency.indices[k]) == 0.0) {
          throw DataError("edge removed between tasks");
        }
      }
    }
  }
}

/// D̃^{-1/2} (A + I) D̃^{-1/2}, d̃ the self-looped degree.
struct NormalizedAdjacency {
  CsrMatrix matrix;
};

inline NormalizedAdjacency normalize_adjacency(const GraphSnapshot& s) {
  const auto& a = s.adjacency;
  const std::size_t n = s.num_nodes;
  std::vector<double> degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    degree[i] = static_cast<double>(a.row_size(i)) + 1.0;
  }
  CsrMatrix out;
  out.rows = out.cols = n;
  out.offsets.assign(n + 1, 0);
  out.indices.reserve(a.nnz() + n);
  out.values.reserve(a.nnz() + n);
  for (std::size_t r = 0; r < n; ++r) {
    bool diagonal_done = false;
    auto emit = [&](NodeId c) {
      out.indices.push_back(c);
      // d_r * d_c is commutative, so mirrored entries are bitwise equal.
      out.values.push_back(1.0 / std::sqrt(degree[r] * degree[c]));
    };
    for (std::size_t k = a.offsets[r]; k < a.offsets[r + 1]; ++k) {
      if (!diagonal_done && a.indices[k] > r) {
        emit(static_cast<NodeId>(r));
        diagonal_done = true;
      }
      emit(a.indices[k]);
    }
    if (!diagonal_done) emit(static_cast<NodeId>(r));
    out.offsets[r + 1] = out.indices.size();
  }
  return NormalizedAdjacency{std::move(out)};
}

enum class Split : std::uint8_t { kTrain, kValidation, kTest };

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

/// Per-batch split sizes: validation and test get floor(n * ratio), train
/// takes the remainder.
inline std::array<std::size_t, 3> split_counts(std::size_t n,
                                               const SplitRatios& r) {
  auto share = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
  };
  const std::size_t val = share(r.validation);
  const std::size_t test = share(r.test);
  return {n - val - test, val, test};
}

/// Train/validation/test membership. A node's split is fixed when it
/// arrives, so the split of task t is the restriction of task t+1's split
/// to the first N_t nodes.
class SplitMask {
 public:
  SplitMask() = default;
  SplitMask(std::vector<Split> kinds, std::vector<std::size_t> node_counts)
      : kinds_(std::move(kinds)), node_counts_(std::move(node_counts)) {}

  Split kind(std::size_t node) const { return kinds_.at(node); }
  int num_tasks() const { return static_cast<int>(node_counts_.size()); }
  std::size_t num_nodes(int task) const {
    return node_counts_.at(static_cast<std::size_t>(task - 1));
  }

  /// Ascending node ids of split `which` within task `task` (1-based).
  std::vector<std::size_t> nodes(int task, Split which) const {
    std::vector<std::size_t> out;
    const std::size_t n = num_nodes(task);
    for (std::size_t i = 0; i < n; ++i) {
      if (kinds_[i] == which) out.push_back(i);
    }
    return out;
  }

 private:
  std::vector<Split> kinds_;
  std::vector<std::size_t> node_counts_;
};

/// Splits each task's newly arrived nodes by `ratios` after a seeded
/// Fisher-Yates shuffle.
inline SplitMask make_splits(const TaskSequence& seq, const SplitRatios& ratios,
                             std::uint64_t seed) {
  const double total = ratios.train + ratios.validation + ratios.test;
  detail::require(std::abs(total - 1.0) < 1e-9, "make_splits: ratios must sum to 1");
  detail::require(ratios.train >= 0 && ratios.validation >= 0 && ratios.test >= 0,
                  "make_splits: negative ratio");
  const std::size_t n_final = seq.num_tasks() ? seq.snapshots.back().num_nodes : 0;
  std::vector<Split> kinds(n_final, Split::kTrain);
  std::vector<std::size_t> counts;
  std::size_t start = 0;
  for (int t = 1; t <= seq.num_tasks(); ++t) {
    const std::size_t end = seq.task(t).num_nodes;
    std::vector<std::size_t> batch(end - start);
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = start + i;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    for (std::size_t i = batch.size(); i > 1; --i) {
      std::swap(batch[i - 1], batch[rng.index(i)]);
    }
    const auto [n_train, n_val, n_test] = split_counts(batch.size(), ratios);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      kinds[batch[i]] = i < n_train           ? Split::kTrain
                        : i < n_train + n_val ? Split::kValidation
                                              : Split::kTest;
    }
    (void)n_test;
    counts.push_back(end);
    start = end;
  }
  return SplitMask(std::move(kinds), std::move(counts));
}

}  // namespace opengc
