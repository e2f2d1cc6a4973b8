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

#include <cmath>
#include <optional>

#include "opengc/dense.hpp"
#include "opengc/error.hpp"

namespace opengc {
namespace detail {

// Lower Cholesky factor of the lower triangle of `a`, or nullopt when a
// non-positive pivot is met.
inline std::optional<DenseMatrix> try_cholesky(const DenseMatrix& a) {
  const Eigen::Index n = a.rows();
  DenseMatrix l = DenseMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
    const double pivot = std::sqrt(diag);
    l(j, j) = pivot;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / pivot;
    }
  }
  return l;
}

}  // namespace detail

/// Lower-triangular L with L L^T = M.
///
/// M must be symmetric to 1e-8 relative. On a failed factorization the
/// diagonal is bumped once by 1e-10 * trace(M) / n and the factorization is
/// retried; a second failure throws NumericalError("matrix not SPD").
inline DenseMatrix cholesky_factor(const DenseMatrix& m) {
  detail::require(m.rows() == m.cols(), "cholesky_factor: matrix not square");
  const double scale = std::max(max_abs(m), 1.0);
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (m.size() > 0 && asym > 1e-8 * scale) {
    throw PreconditionError("cholesky_factor: matrix not symmetric");
  }
  if (auto l = detail::try_cholesky(m)) return *std::move(l);
  const auto n = static_cast<double>(m.rows());
  const double jitter = 1e-10 * m.trace() / n;
  DenseMatrix bumped = m;
  if (jitter > 0.0) bumped.diagonal().array() += jitter;
  if (auto l = detail::try_cholesky(bumped)) return *std::move(l);
  throw NumericalError("matrix not SPD");
}

/// Solves L L^T X = B in place given the lower factor L.
inline void cholesky_solve_in_place(const DenseMatrix& lower, DenseMatrix& b) {
  const Eigen::Index n = lower.rows();
  require_shape(b, n, b.cols(), "cholesky_solve");
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = b(i, c);
      for (Eigen::Index k = 0; k < i; ++k) s -= lower(i, k) * b(k, c);
      b(i, c) = s / lower(i, i);
    }
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      double s = b(i, c);
      for (Eigen::Index k = i + 1; k < n; ++k) s -= lower(k, i) * b(k, c);
      b(i, c) = s / lower(i, i);
    }
  }
}

/// X = M^{-1} B for symmetric positive definite M.
inline DenseMatrix spd_solve(const DenseMatrix& m, const DenseMatrix& b) {
  detail::require(b.rows() == m.rows(), "spd_solve: dimension mismatch");
  const DenseMatrix lower = cholesky_factor(m);
  DenseMatrix x = b;
  cholesky_solve_in_place(lower, x);
  return x;
}

}  // namespace opengc
