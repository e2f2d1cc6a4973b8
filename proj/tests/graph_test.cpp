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

#include "opengc/graph.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace opengc {
namespace {

using testing::make_snapshot;

TEST(NormalizeAdjacencyTest, SingleEdge) {
  auto s = make_snapshot(2, {{0, 1}}, DenseMatrix::Zero(2, 1), {0, 0}, 1);
  const DenseMatrix a = normalize_adjacency(s).matrix.to_dense();
  EXPECT_DOUBLE_EQ(a(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(a(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(a(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(a(1, 1), 0.5);
}

TEST(NormalizeAdjacencyTest, Path) {
  auto s = make_snapshot(3, {{0, 1}, {1, 2}}, DenseMatrix::Zero(3, 1), {0, 0, 0}, 1);
  const DenseMatrix a = normalize_adjacency(s).matrix.to_dense();
  EXPECT_DOUBLE_EQ(a(0, 0), 0.5);
  EXPECT_NEAR(a(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(a(0, 1), 0.408248, 1e-6);
  EXPECT_NEAR(a(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(a(2, 2), 0.5);
  EXPECT_EQ(a(0, 2), 0.0);
}

TEST(NormalizeAdjacencyTest, IsolatedNode) {
  auto s = make_snapshot(1, {}, DenseMatrix::Zero(1, 1), {0}, 1);
  const DenseMatrix a = normalize_adjacency(s).matrix.to_dense();
  ASSERT_EQ(a.rows(), 1);
  EXPECT_EQ(a(0, 0), 1.0);
}

TEST(NormalizeAdjacencyTest, SymmetricAndRowIdentity) {
  Rng rng(17);
  const std::size_t n = 60;
  const auto edges = testing::random_edges(rng, n, 0.08);
  auto s = make_snapshot(n, edges, DenseMatrix::Zero(n, 1), std::vector<int>(n, 0), 1);
  const auto& m = normalize_adjacency(s).matrix;
  std::vector<double> deg(n);
  for (std::size_t i = 0; i < n; ++i) deg[i] = static_cast<double>(s.degree(i)) + 1.0;
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t k = m.offsets[r]; k < m.offsets[r + 1]; ++k) {
      const auto c = m.indices[k];
      // Mirrored entries are bitwise equal.
      EXPECT_EQ(m.values[k], m.at(c, r));
      acc += m.values[k] * std::sqrt(deg[c] / deg[r]);
    }
    EXPECT_NEAR(acc, 1.0, 1e-12);
  }
}

TEST(AdjacencyTest, DropsSelfLoopsAndDuplicates) {
  const CsrMatrix a = build_undirected_adjacency(3, std::vector<Edge>{{0, 1}, {1, 0}, {1, 1}, {2, 1}, {1, 2}});
  EXPECT_EQ(a.nnz(), 4u);
  EXPECT_EQ(a.at(1, 1), 0.0);
  EXPECT_EQ(a.at(0, 1), 1.0);
  EXPECT_EQ(a.at(2, 1), 1.0);
}

TEST(AdjacencyTest, OutOfRangeEndpoint) {
  EXPECT_THROW(build_undirected_adjacency(2, std::vector<Edge>{{0, 2}}), DataError);
}

TEST(ValidateTest, LabelOutOfRange) {
  auto s = make_snapshot(2, {{0, 1}}, DenseMatrix::Zero(2, 1), {0, 3}, 2);
  try {
    validate(s);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("label out of range"), std::string::npos);
  }
}

TaskSequence three_task_sequence(std::size_t per_task) {
  TaskSequence seq;
  std::size_t n = 0;
  for (int t = 1; t <= 3; ++t) {
    n += per_task;
    GraphSnapshot s;
    s.task_index = t;
    s.num_nodes = n;
    s.adjacency = build_undirected_adjacency(n, {});
    s.features = DenseMatrix::Zero(static_cast<Eigen::Index>(n), 2);
    s.labels.assign(n, 0);
    s.node_arrival_task.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.node_arrival_task[i] = static_cast<int>(i / per_task) + 1;
    s.num_classes = 1;
    seq.snapshots.push_back(std::move(s));
  }
  return seq;
}

TEST(SplitTest, Counts) {
  const auto ten = split_counts(10, SplitRatios{});
  EXPECT_EQ(ten[0], 6u);
  EXPECT_EQ(ten[1], 2u);
  EXPECT_EQ(ten[2], 2u);
  const auto seven = split_counts(7, SplitRatios{});
  EXPECT_EQ(seven[0], 5u);
  EXPECT_EQ(seven[1], 1u);
  EXPECT_EQ(seven[2], 1u);
  const auto zero = split_counts(0, SplitRatios{});
  EXPECT_EQ(zero[0] + zero[1] + zero[2], 0u);
}

TEST(SplitTest, PerBatchPartitionAndExpansion) {
  const TaskSequence seq = three_task_sequence(10);
  validate(seq);
  const SplitMask mask = make_splits(seq, SplitRatios{}, 123);
  for (int t = 1; t <= 3; ++t) {
    const auto train = mask.nodes(t, Split::kTrain);
    const auto val = mask.nodes(t, Split::kValidation);
    const auto test = mask.nodes(t, Split::kTest);
    EXPECT_EQ(train.size(), 6u * t);
    EXPECT_EQ(val.size(), 2u * t);
    EXPECT_EQ(test.size(), 2u * t);
    EXPECT_EQ(train.size() + val.size() + test.size(), seq.task(t).num_nodes);
    if (t > 1) {
      // Earlier splits are prefixes of later ones.
      const auto prev = mask.nodes(t - 1, Split::kTrain);
      EXPECT_TRUE(std::equal(prev.begin(), prev.end(), train.begin()));
    }
  }
}

TEST(SplitTest, Deterministic) {
  const TaskSequence seq = three_task_sequence(7);
  const SplitMask a = make_splits(seq, SplitRatios{}, 99);
  const SplitMask b = make_splits(seq, SplitRatios{}, 99);
  for (std::size_t i = 0; i < 21; ++i) EXPECT_EQ(a.kind(i), b.kind(i));
  const SplitMask c = make_splits(seq, SplitRatios{}, 100);
  bool differs = false;
  for (std::size_t i = 0; i < 21; ++i) differs = differs || a.kind(i) != c.kind(i);
  EXPECT_TRUE(differs);
}

TEST(SequenceTest, RejectsNonPrefix) {
  TaskSequence seq = three_task_sequence(4);
  seq.snapshots[2].features(0, 0) = 1.0;
  EXPECT_THROW(validate(seq), DataError);
}

}  // namespace
}  // namespace opengc
