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

// The relay model: a random, never-trained linear+relu layer followed by a
// closed-form kernel ridge regression readout.

#pragma once

#include <cmath>
#include <cstdint>

#include "opengc/dense.hpp"
#include "opengc/error.hpp"
#include "opengc/linalg.hpp"
#include "opengc/rng.hpp"
#include "opengc/tape.hpp"

namespace opengc {

struct RelayParams {
  DenseMatrix weight;  // d x b
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t hidden() const { return static_cast<std::size_t>(weight.cols()); }
};

struct KrrReadout {
  DenseMatrix weights;  // b x C
  double lambda = 5e-3;
  double log_tau = 0.0;

  double tau() const { return std::exp(log_tau); }
};

/// Draws weight entries i.i.d. N(0, 2/d) from an Rng seeded with `seed`,
/// row-major. Bit-exactly reproducible from (seed, d, b).
inline RelayParams sample_relay(std::uint64_t seed, std::size_t d, std::size_t b) {
  detail::require(b >= 1 && d >= 1, "sample_relay: dimensions must be positive");
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(d));
  RelayParams p;
  p.seed = seed;
  p.weight.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(b));
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) {
    p.weight.data()[i] = stddev * rng.normal();
  }
  return p;
}

/// relu(H * weight).
inline DenseMatrix transform(const RelayParams& theta, const DenseMatrix& h) {
  if (h.cols() != theta.weight.rows()) {
    throw PreconditionError("transform: feature dimension mismatch");
  }
  DenseMatrix p = h * theta.weight;
  return p.cwiseMax(0.0);
}

inline Var transform(Tape& tape, const RelayParams& theta, Var h) {
  if (tape.value(h).cols() != theta.weight.rows()) {
    throw PreconditionError("transform: feature dimension mismatch");
  }
  return tape.relu(tape.matmul(h, tape.constant(theta.weight)));
}

/// W = P^T (P P^T + λI)^{-1} Y', solving the N' x N' dual system.
inline DenseMatrix krr_fit(const DenseMatrix& p, const DenseMatrix& yp, double lambda) {
  detail::require(lambda > 0.0, "krr_fit: lambda must be positive");
  detail::require(p.rows() == yp.rows(), "krr_fit: row count mismatch");
  DenseMatrix gram = p * p.transpose();
  gram.diagonal().array() += lambda;
  return p.transpose() * spd_solve(gram, yp);
}

inline Var krr_fit(Tape& tape, Var p, Var yp, double lambda) {
  detail::require(lambda > 0.0, "krr_fit: lambda must be positive");
  Var gram = tape.add_identity(tape.matmul(p, tape.transpose(p)), lambda);
  return tape.matmul(tape.transpose(p), tape.spd_solve(gram, yp));
}

/// Row-wise log softmax of transform(theta, H) * W / tau.
inline DenseMatrix predict_logprobs(const RelayParams& theta, const DenseMatrix& w,
                                    const DenseMatrix& h, double tau) {
  detail::require(tau > 0.0, "predict_logprobs: tau must be positive");
  const DenseMatrix logits = transform(theta, h) * w;
  if (!all_finite(logits)) throw NumericalError("predict_logprobs: non-finite logits");
  return Tape::log_softmax_rows_value(logits, tau);
}

}  // namespace opengc
