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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "opengc/error.hpp"

namespace opengc {

/// Row-major 64-bit dense matrix; the carrier for features, embeddings,
/// relay activations, readout weights and label matrices.
using DenseMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline bool all_finite(const DenseMatrix& m) { return m.allFinite(); }

inline double max_abs(const DenseMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Rows of `m` listed in `rows`, in that order.
inline DenseMatrix gather_rows(const DenseMatrix& m,
                               std::span<const std::size_t> rows) {
  DenseMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) =
        m.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

/// One-hot encoding of `labels` over `num_classes` columns.
inline DenseMatrix one_hot(std::span<const int> labels, int num_classes) {
  DenseMatrix out = DenseMatrix::Zero(static_cast<Eigen::Index>(labels.size()),
                                      num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    detail::require(labels[i] >= 0 && labels[i] < num_classes,
                    "one_hot: label out of range");
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

/// Index of the largest entry in each row; ties go to the lowest index.
inline std::vector<int> row_argmax(const DenseMatrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    m.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

inline void require_shape(const DenseMatrix& m, Eigen::Index rows,
                          Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw PreconditionError(what + ": expected " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", got " +
                            std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()));
  }
}

}  // namespace opengc
