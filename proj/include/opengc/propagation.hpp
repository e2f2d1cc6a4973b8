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

#include "opengc/dense.hpp"
#include "opengc/error.hpp"
#include "opengc/graph.hpp"

namespace opengc {

/// Propagated node features, one row per node in snapshot order.
struct Embeddings {
  DenseMatrix matrix;
  int layers = 0;
  int task_index = 0;
};

/// out = A * x for CSR A. Each output row accumulates its nonzeros in
/// column order, so the result does not depend on scheduling.
inline DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& x) {
  if (a.cols != static_cast<std::size_t>(x.rows())) {
    throw PreconditionError("spmm: dimension mismatch");
  }
  DenseMatrix out = DenseMatrix::Zero(static_cast<Eigen::Index>(a.rows), x.cols());
  for (std::size_t r = 0; r < a.rows; ++r) {
    auto dst = out.row(static_cast<Eigen::Index>(r));
    for (std::size_t k = a.offsets[r]; k < a.offsets[r + 1]; ++k) {
      dst.noalias() += a.values[k] * x.row(a.indices[k]);
    }
  }
  return out;
}

/// Â^K X by K successive sparse-dense products; K = 0 returns X.
inline Embeddings propagate(const NormalizedAdjacency& adj, const DenseMatrix& x,
                            int layers, int task_index = 0) {
  detail::require(layers >= 0, "propagate: negative layer count");
  if (adj.matrix.rows != static_cast<std::size_t>(x.rows())) {
    throw PreconditionError("propagate: dimension mismatch");
  }
  DenseMatrix h = x;
  for (int k = 0; k < layers; ++k) h = spmm(adj.matrix, h);
  return Embeddings{std::move(h), layers, task_index};
}

inline Embeddings propagate(const GraphSnapshot& s, int layers) {
  return propagate(normalize_adjacency(s), s.features, layers, s.task_index);
}

/// Condensed graphs use A' = I, so Ã' = 2I, Â' = I and Â'^K X' = X'.
inline Embeddings propagate_condensed(const DenseMatrix& xp) {
  return Embeddings{xp, 0, 0};
}

}  // namespace opengc
