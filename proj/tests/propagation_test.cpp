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

#include "opengc/propagation.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace opengc {
namespace {

using testing::dense_normalized;
using testing::make_snapshot;
using testing::random_edges;
using testing::random_matrix;

TEST(PropagateTest, PathOneLayer) {
  DenseMatrix x(3, 1);
  x << 1, 0, 0;
  const auto s = make_snapshot(3, {{0, 1}, {1, 2}}, x, {0, 0, 0}, 1);
  const DenseMatrix h = propagate(s, 1).matrix;
  EXPECT_DOUBLE_EQ(h(0, 0), 0.5);
  EXPECT_NEAR(h(1, 0), 0.408248, 1e-6);
  EXPECT_EQ(h(2, 0), 0.0);
}

TEST(PropagateTest, ZeroLayersIsIdentity) {
  Rng rng(1);
  const DenseMatrix x = random_matrix(rng, 30, 4);
  const auto s = make_snapshot(30, random_edges(rng, 30, 0.1), x, std::vector<int>(30, 0), 1);
  EXPECT_EQ(propagate(s, 0).matrix, x);
}

TEST(PropagateTest, MatchesDenseMatrixPower) {
  Rng rng(12);
  const std::size_t n = 100;
  const auto edges = random_edges(rng, n, 0.05);
  const DenseMatrix x = random_matrix(rng, n, 6);
  const auto s = make_snapshot(n, edges, x, std::vector<int>(n, 0), 1);
  const DenseMatrix a = dense_normalized(n, edges);
  const DenseMatrix h = propagate(s, 2).matrix;
  EXPECT_LE((h - a * (a * x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PropagateTest, Linear) {
  Rng rng(13);
  const std::size_t n = 50;
  const auto edges = random_edges(rng, n, 0.1);
  const DenseMatrix x = random_matrix(rng, n, 3), z = random_matrix(rng, n, 3);
  const auto adj = normalize_adjacency(make_snapshot(n, edges, x, std::vector<int>(n, 0), 1));
  const DenseMatrix lhs = propagate(adj, 2.5 * x - 0.75 * z, 3).matrix;
  const DenseMatrix rhs = 2.5 * propagate(adj, x, 3).matrix - 0.75 * propagate(adj, z, 3).matrix;
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PropagateTest, SpectralBound) {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 20;
    const auto edges = random_edges(rng, n, 0.2);
    const DenseMatrix x = random_matrix(rng, n, 2);
    const auto adj = normalize_adjacency(make_snapshot(n, edges, x, std::vector<int>(n, 0), 1));
    for (int k = 1; k <= 3; ++k) {
      EXPECT_LE(propagate(adj, x, k).matrix.norm(), x.norm() * (1.0 + 1e-9));
    }
  }
}

TEST(PropagateTest, DimensionMismatch) {
  const auto s = make_snapshot(3, {{0, 1}}, DenseMatrix::Zero(3, 1), {0, 0, 0}, 1);
  EXPECT_THROW(propagate(normalize_adjacency(s), DenseMatrix::Zero(4, 1), 1), PreconditionError);
}

TEST(PropagateCondensedTest, Identity) {
  Rng rng(3);
  const DenseMatrix xp = random_matrix(rng, 7, 5);
  EXPECT_EQ(propagate_condensed(xp).matrix, xp);
  EXPECT_EQ(propagate_condensed(DenseMatrix::Zero(2, 2)).matrix, DenseMatrix::Zero(2, 2));
}

TEST(PropagateCondensedTest, AgreesWithEdgelessGraph) {
  // A' = I means no off-diagonal edges: normalizing A' + I = 2I gives I.
  Rng rng(4);
  const DenseMatrix xp = random_matrix(rng, 7, 5);
  const auto s = make_snapshot(7, {}, xp, std::vector<int>(7, 0), 1);
  EXPECT_LE((propagate(s, 2).matrix - propagate_condensed(xp).matrix).cwiseAbs().maxCoeff(),
            1e-15);
}

}  // namespace
}  // namespace opengc
