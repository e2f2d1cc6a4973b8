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
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opengc/condenser.hpp"
#include "opengc/dense.hpp"
#include "opengc/error.hpp"
#include "opengc/rng.hpp"

namespace opengc {

/// Label assigned to nodes rejected as belonging to an unseen class.
inline constexpr int kUnknown = -1;

// --- downstream classifier -------------------------------------------------

struct DownstreamConfig {
  double lr = 0.05;
  double weight_decay = 5e-4;
  int max_steps = 2000;
  double grad_tol = 1e-6;
  std::uint64_t seed = 0;
};

/// Softmax regression: logits = X W + b.
struct LinearClassifier {
  DenseMatrix weights;  // d x C
  Eigen::RowVectorXd bias;
  int steps = 0;
  double final_grad_norm = 0.0;

  int num_classes() const { return static_cast<int>(weights.cols()); }

  DenseMatrix logits(const DenseMatrix& x) const {
    DenseMatrix z = x * weights;
    z.rowwise() += bias;
    return z;
  }
};

inline DenseMatrix softmax_rows(const DenseMatrix& logits) {
  return Tape::log_softmax_rows_value(logits, 1.0).array().exp().matrix();
}

/// Full-batch softmax regression with L2 on W, trained by ADAM until the
/// gradient norm drops to grad_tol or max_steps is reached.
inline LinearClassifier train_softmax_regression(const DenseMatrix& x,
                                                 std::span<const int> labels,
                                                 int num_classes,
                                                 const DownstreamConfig& cfg) {
  detail::require(static_cast<std::size_t>(x.rows()) == labels.size() && x.rows() > 0,
                  "train_downstream: features and labels disagree");
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(num_classes), 0);
  int distinct = 0;
  for (int y : labels) {
    detail::require(y >= 0 && y < num_classes, "train_downstream: label out of range");
    if (!seen[static_cast<std::size_t>(y)]) {
      seen[static_cast<std::size_t>(y)] = 1;
      ++distinct;
    }
  }
  detail::require(distinct >= 2, "train_downstream: need at least two classes");

  const DenseMatrix y = one_hot(labels, num_classes);
  const double n = static_cast<double>(x.rows());
  Rng rng(cfg.seed);
  LinearClassifier clf;
  clf.weights.resize(x.cols(), num_classes);
  for (Eigen::Index i = 0; i < clf.weights.size(); ++i) {
    clf.weights.data()[i] = 0.01 * rng.normal();
  }
  clf.bias = Eigen::RowVectorXd::Zero(num_classes);

  DenseMatrix m_w = DenseMatrix::Zero(x.cols(), num_classes);
  DenseMatrix v_w = m_w;
  Eigen::RowVectorXd m_b = Eigen::RowVectorXd::Zero(num_classes);
  Eigen::RowVectorXd v_b = m_b;
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  for (int step = 1; step <= cfg.max_steps; ++step) {
    const DenseMatrix probs = softmax_rows(clf.logits(x));
    const DenseMatrix delta = (probs - y) / n;
    const DenseMatrix g_w = x.transpose() * delta + cfg.weight_decay * clf.weights;
    const Eigen::RowVectorXd g_b = delta.colwise().sum();
    const double norm = std::sqrt(g_w.squaredNorm() + g_b.squaredNorm());
    if (!std::isfinite(norm)) throw NumericalError("train_downstream: divergence");
    clf.final_grad_norm = norm;
    clf.steps = step - 1;
    if (norm <= cfg.grad_tol) break;
    const double c1 = 1.0 - std::pow(kBeta1, step);
    const double c2 = 1.0 - std::pow(kBeta2, step);
    m_w = kBeta1 * m_w + (1 - kBeta1) * g_w;
    v_w = kBeta2 * v_w + (1 - kBeta2) * g_w.cwiseProduct(g_w);
    m_b = kBeta1 * m_b + (1 - kBeta1) * g_b;
    v_b = kBeta2 * v_b + (1 - kBeta2) * g_b.cwiseProduct(g_b);
    clf.weights.array() -= cfg.lr * (m_w.array() / c1) / ((v_w.array() / c2).sqrt() + kEps);
    clf.bias.array() -= cfg.lr * (m_b.array() / c1) / ((v_b.array() / c2).sqrt() + kEps);
    clf.steps = step;
  }
  return clf;
}

/// Trains on (X', Y'); with the identity adjacency the propagated condensed
/// features are X' itself.
inline LinearClassifier train_downstream(const CondensedGraph& cond,
                                         const DownstreamConfig& cfg) {
  return train_softmax_regression(propagate_condensed(cond.features).matrix, cond.labels,
                                  cond.num_classes, cfg);
}

// --- thresholds -------------------------------------------------------------

/// The k-th smallest confidence, k = max(1, floor(quantile * n)). Flagging
/// `confidence <= threshold` rejects exactly k values when there are no
/// ties, and every tied value otherwise.
inline double calibrate_threshold(std::span<const double> confidences,
                                  double quantile = 0.10) {
  if (confidences.empty()) throw PreconditionError("calibrate_threshold: empty input");
  const auto n = confidences.size();
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(quantile * static_cast<double>(n) + 1e-9)));
  std::vector<double> sorted(confidences.begin(), confidences.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end());
  return sorted[k - 1];
}

// --- Weibull ------------------------------------------------------------------

struct WeibullModel {
  double shape = 1.0;
  double scale = 1.0;
  std::size_t tail_size = 0;

  double cdf(double x) const {
    if (x <= 0.0) return 0.0;
    return 1.0 - std::exp(-std::pow(x / scale, shape));
  }
};

inline double weibull_log_likelihood(std::span<const double> x, double shape, double scale) {
  const double n = static_cast<double>(x.size());
  double sum_log = 0.0;
  double sum_pow = 0.0;
  for (double v : x) {
    sum_log += std::log(v);
    sum_pow += std::pow(v / scale, shape);
  }
  return n * std::log(shape) - n * shape * std::log(scale) + (shape - 1.0) * sum_log - sum_pow;
}

/// MLE of the scale at a fixed shape: (mean x^k)^{1/k}.
inline double weibull_scale_mle(std::span<const double> x, double shape) {
  detail::require(!x.empty() && shape > 0.0, "weibull_scale_mle: bad input");
  const double top = *std::max_element(x.begin(), x.end());
  double acc = 0.0;
  for (double v : x) acc += std::pow(v / top, shape);
  return top * std::pow(acc / static_cast<double>(x.size()), 1.0 / shape);
}

namespace detail {

// Profile score in the shape k for data y scaled to max 1:
// Σ y^k ln y / Σ y^k - 1/k - mean(ln y), strictly increasing in k.
struct WeibullProfile {
  std::span<const double> y;
  double mean_log = 0.0;

  std::pair<double, double> value_and_slope(double k) const {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (double v : y) {
      const double p = std::pow(v, k);
      const double l = std::log(v);
      s0 += p;
      s1 += p * l;
      s2 += p * l * l;
    }
    const double r = s1 / s0;
    return {r - 1.0 / k - mean_log, (s2 / s0 - r * r) + 1.0 / (k * k)};
  }
};

}  // namespace detail

/// Two-parameter Weibull MLE on the `tail_size` largest distances.
///
/// The shape solves the profile score equation by Newton's method inside a
/// sign bracket (bisecting when a step leaves it) to |score| <= 1e-10; if
/// that does not converge the profile likelihood is maximized by
/// golden-section search over the final bracket.
inline WeibullModel fit_weibull(std::span<const double> distances, std::size_t tail_size) {
  detail::require(tail_size >= 2, "fit_weibull: tail_size must be >= 2");
  if (distances.size() < tail_size) {
    throw PreconditionError("fit_weibull: fewer distances than tail_size");
  }
  std::vector<double> tail(distances.begin(), distances.end());
  std::sort(tail.begin(), tail.end(), std::greater<>());
  tail.resize(tail_size);
  for (double v : tail) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw PreconditionError("fit_weibull: distances must be positive");
    }
  }
  const double top = tail.front();
  const double bottom = tail.back();
  if (top - bottom <= 1e-12 * top) throw NumericalError("degenerate tail");

  std::vector<double> y(tail.size());
  double mean_log = 0.0;
  for (std::size_t i = 0; i < tail.size(); ++i) {
    y[i] = tail[i] / top;
    mean_log += std::log(y[i]);
  }
  mean_log /= static_cast<double>(y.size());
  const detail::WeibullProfile profile{y, mean_log};

  double lo = 1e-3;
  double hi = 1.0;
  while (profile.value_and_slope(hi).first < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("fit_weibull: shape bracket diverged");
  }
  double k = 0.5 * (lo + hi);
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    const auto [score, slope] = profile.value_and_slope(k);
    if (std::abs(score) <= 1e-10) {
      converged = true;
      break;
    }
    (score < 0.0 ? lo : hi) = k;
    double next = k - score / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    k = next;
  }
  if (!converged) {
    auto objective = [&](double shape) {
      return weibull_log_likelihood(tail, shape, weibull_scale_mle(tail, shape));
    };
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - ratio * (b - a), d = a + ratio * (b - a);
    while (b - a > 1e-12 * std::max(1.0, b)) {
      if (objective(c) > objective(d)) {
        b = d;
      } else {
        a = c;
      }
      c = b - ratio * (b - a);
      d = a + ratio * (b - a);
    }
    k = 0.5 * (a + b);
  }
  return WeibullModel{k, weibull_scale_mle(tail, k), tail_size};
}

// --- open-set model ---------------------------------------------------------

enum class OpensetMode { kSoftmax, kOpenmax };

struct OpensetConfig {
  OpensetMode mode = OpensetMode::kSoftmax;
  double quantile = 0.10;
  std::size_t tail_size = 20;
  int alpha_rank = 0;  // 0 means min(C, 3)
};

struct OpensetModel {
  OpensetMode mode = OpensetMode::kSoftmax;
  double threshold = 0.0;
  DenseMatrix mav;  // C x C, mean logit vector per class
  std::vector<std::optional<WeibullModel>> weibull;
  int alpha_rank = 1;
  bool calibrated = false;
};

/// Openmax logit revision. Returns C + 1 logits, the unknown class last:
/// for the top alpha_rank classes by logit, w = (1 - (rank - 1) / alpha_rank)
/// · cdf; v̂ = v (1 - w) and v_unknown = Σ v w.
inline Eigen::RowVectorXd openmax_revise(const Eigen::RowVectorXd& logits,
                                         std::span<const double> cdf, int alpha_rank) {
  const auto c = logits.size();
  detail::require(static_cast<Eigen::Index>(cdf.size()) == c, "openmax_revise: size mismatch");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(c));
  for (Eigen::Index i = 0; i < c; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return logits(a) > logits(b); });
  Eigen::RowVectorXd out(c + 1);
  out.head(c) = logits;
  double unknown = 0.0;
  const int top = std::min<int>(alpha_rank, static_cast<int>(c));
  for (int r = 0; r < top; ++r) {
    const Eigen::Index cls = order[static_cast<std::size_t>(r)];
    const double w = (1.0 - static_cast<double>(r) / alpha_rank) *
                     cdf[static_cast<std::size_t>(cls)];
    out(cls) = logits(cls) * (1.0 - w);
    unknown += logits(cls) * w;
  }
  out(c) = unknown;
  return out;
}

/// Per-class Weibull CDF of the distance from `logits` to each MAV.
inline std::vector<double> openmax_cdfs(const OpensetModel& model,
                                        const Eigen::RowVectorXd& logits) {
  std::vector<double> cdf(static_cast<std::size_t>(logits.size()), 0.0);
  for (std::size_t c = 0; c < cdf.size(); ++c) {
    if (!model.weibull[c]) continue;
    const double dist = (logits - model.mav.row(static_cast<Eigen::Index>(c))).norm();
    cdf[c] = model.weibull[c]->cdf(dist);
  }
  return cdf;
}

/// Class probabilities used for the decision: C entries in softmax mode,
/// C + 1 (unknown last) in openmax mode.
inline Eigen::RowVectorXd openset_probabilities(const OpensetModel& model,
                                                const Eigen::RowVectorXd& logits) {
  Eigen::RowVectorXd z = logits;
  if (model.mode == OpensetMode::kOpenmax) {
    const auto cdf = openmax_cdfs(model, logits);
    z = openmax_revise(logits, cdf, model.alpha_rank);
  }
  const double shift = z.maxCoeff();
  Eigen::RowVectorXd p = (z.array() - shift).exp();
  return p / p.sum();
}

/// Argmax over known classes, or kUnknown when the unknown slot wins or the
/// winning probability is <= threshold.
inline int openset_decide(const Eigen::RowVectorXd& probs, int num_known, double threshold) {
  Eigen::Index best = 0;
  const double top = probs.maxCoeff(&best);
  if (best >= num_known || top <= threshold) return kUnknown;
  return static_cast<int>(best);
}

inline std::vector<int> openset_predict(const LinearClassifier& clf, const OpensetModel& model,
                                        const DenseMatrix& embeddings) {
  if (!model.calibrated) throw PreconditionError("openset_predict: uncalibrated model");
  const DenseMatrix logits = clf.logits(embeddings);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = openset_decide(
        openset_probabilities(model, logits.row(r)), clf.num_classes(), model.threshold);
  }
  return out;
}

/// Fits MAVs and Weibull tails on correctly classified training rows, then
/// sets the threshold to reject `quantile` of the validation rows.
///
/// Classes with no correctly classified rows use all of their rows for the
/// MAV. Classes with fewer than two tail distances or a degenerate tail get
/// no Weibull model (CDF taken as 0).
inline OpensetModel calibrate_openset(const LinearClassifier& clf,
                                      const DenseMatrix& train_embeddings,
                                      std::span<const int> train_labels,
                                      const DenseMatrix& val_embeddings,
                                      const OpensetConfig& cfg) {
  const int classes = clf.num_classes();
  OpensetModel model;
  model.mode = cfg.mode;
  model.alpha_rank = cfg.alpha_rank > 0 ? cfg.alpha_rank : std::min(classes, 3);
  model.mav = DenseMatrix::Zero(classes, classes);
  model.weibull.assign(static_cast<std::size_t>(classes), std::nullopt);

  if (cfg.mode == OpensetMode::kOpenmax) {
    const DenseMatrix logits = clf.logits(train_embeddings);
    const std::vector<int> predicted = row_argmax(logits);
    for (int c = 0; c < classes; ++c) {
      std::vector<Eigen::Index> rows, correct;
      for (std::size_t i = 0; i < train_labels.size(); ++i) {
        if (train_labels[i] != c) continue;
        rows.push_back(static_cast<Eigen::Index>(i));
        if (predicted[i] == c) correct.push_back(static_cast<Eigen::Index>(i));
      }
      const auto& members = correct.empty() ? rows : correct;
      if (members.empty()) continue;
      Eigen::RowVectorXd mav = Eigen::RowVectorXd::Zero(classes);
      for (auto r : members) mav += logits.row(r);
      mav /= static_cast<double>(members.size());
      model.mav.row(c) = mav;
      std::vector<double> dist;
      for (auto r : members) {
        const double d = (logits.row(r) - mav).norm();
        if (d > 0.0) dist.push_back(d);
      }
      const std::size_t tail = std::min(cfg.tail_size, dist.size());
      if (tail < 2) continue;
      try {
        model.weibull[static_cast<std::size_t>(c)] = fit_weibull(dist, tail);
      } catch (const NumericalError&) {
        // degenerate tail: leave the class without a Weibull model
      }
    }
  }

  model.calibrated = true;
  const DenseMatrix val_logits = clf.logits(val_embeddings);
  std::vector<double> confidence(static_cast<std::size_t>(val_logits.rows()));
  for (Eigen::Index r = 0; r < val_logits.rows(); ++r) {
    const Eigen::RowVectorXd p = openset_probabilities(model, val_logits.row(r));
    confidence[static_cast<std::size_t>(r)] = p.head(classes).maxCoeff();
  }
  model.threshold = calibrate_threshold(confidence, cfg.quantile);
  return model;
}

}  // namespace opengc
