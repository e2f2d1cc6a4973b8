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

// Temporal-invariance condensation.
//
// Given the propagated embeddings H of a task's training nodes and a set of
// perturbed environments H^e, the condensed features X' (with fixed one-hot
// labels Y') are optimized so that a KRR readout fit on relu(X'Θ) classifies
// the original rows well and uniformly well across environments:
//
//   W   = P'^T (P' P'^T + λI)^{-1} Y',      P' = relu(X'Θ)
//   L   = CE(H) + α · mean_e [ CE(H^e) + γ · g_e² ]
//   g_e = d/dw CE(softmax(w · relu(H^e Θ) W / τ)) at w = 1
//
// Θ is resampled every iteration; X' and log τ are updated by ADAM.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "opengc/dense.hpp"
#include "opengc/environments.hpp"
#include "opengc/error.hpp"
#include "opengc/graph.hpp"
#include "opengc/propagation.hpp"
#include "opengc/relay.hpp"
#include "opengc/rng.hpp"
#include "opengc/tape.hpp"

namespace opengc {

struct CondenseConfig {
  double lambda = 5e-3;
  int layers = 2;
  std::size_t hidden = 1024;
  double alpha = 0.5;
  double gamma = 0.5;
  EnvironmentConfig env;
  double lr = 1e-2;
  int max_iters = 200;
  int patience = 5;
  int eval_every = 10;  // 0 disables validation and early stopping
  std::uint64_t seed = 0;
  double ratio = 0.01;
  double init_noise = 1e-3;
  int threads = 1;
};

/// Canonical text of every field that influences the result.
inline std::string canonical_string(const CondenseConfig& c) {
  std::ostringstream s;
  s.precision(17);
  s << "lambda=" << c.lambda << ";K=" << c.layers << ";b=" << c.hidden
    << ";alpha=" << c.alpha << ";gamma=" << c.gamma << ";eta=" << c.env.eta
    << ";c=" << c.env.c << ";beta_mode="
    << (c.env.mode == BetaMode::kLiteral ? "literal" : "intent")
    << ";env_count=" << c.env.env_count << ";drop_edge=" << c.env.drop_edge_rate
    << ";drop_feature=" << c.env.drop_feature_rate << ";fallback_scope="
    << (c.env.fallback_scope == FallbackScope::kGlobal ? "global" : "no_history")
    << ";lr=" << c.lr << ";max_iters=" << c.max_iters << ";patience=" << c.patience
    << ";eval_every=" << c.eval_every << ";seed=" << c.seed << ";ratio=" << c.ratio
    << ";init_noise=" << c.init_noise;
  return s.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const CondenseConfig& c) {
  return fnv1a(canonical_string(c));
}

struct CondenseMetrics {
  double best_val_accuracy = -1.0;
  int iterations = 0;
  double final_loss = 0.0;
  std::vector<double> best_accuracy_history;  // non-decreasing
};

struct CondensedGraph {
  DenseMatrix features;  // X', N' x d
  DenseMatrix targets;   // Y', N' x C one-hot
  std::vector<int> labels;
  int num_classes = 0;
  int task = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  double ratio = 0.0;
  std::size_t source_nodes = 0;  // N_t
  double log_tau = 0.0;
  CondenseMetrics metrics;

  std::size_t num_nodes() const { return labels.size(); }
};

/// Splits `total` condensed nodes across classes in proportion to
/// `class_sizes` with a floor of one node per class. Quotas are floored
/// (minimum 1); surplus is taken back from the classes with the largest
/// overshoot and shortfall goes to the largest remainders, lowest class
/// index first on ties.
inline std::vector<std::size_t> allocate_class_counts(
    std::size_t total, std::span<const std::size_t> class_sizes) {
  const std::size_t classes = class_sizes.size();
  detail::require(classes > 0, "allocate_class_counts: no classes");
  if (total < classes) {
    throw PreconditionError("ratio too small: " + std::to_string(total) +
                            " condensed nodes for " + std::to_string(classes) + " classes");
  }
  const double mass = static_cast<double>(
      std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0}));
  detail::require(mass > 0, "allocate_class_counts: empty class distribution");
  std::vector<double> quota(classes);
  std::vector<std::size_t> counts(classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    quota[c] = static_cast<double>(total) * static_cast<double>(class_sizes[c]) / mass;
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(quota[c])));
    assigned += counts[c];
  }
  while (assigned > total) {
    std::size_t pick = classes;
    for (std::size_t c = 0; c < classes; ++c) {
      if (counts[c] <= 1) continue;
      if (pick == classes || static_cast<double>(counts[c]) - quota[c] >
                                 static_cast<double>(counts[pick]) - quota[pick]) {
        pick = c;
      }
    }
    --counts[pick];
    --assigned;
  }
  while (assigned < total) {
    std::size_t pick = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (quota[c] - static_cast<double>(counts[c]) >
          quota[pick] - static_cast<double>(counts[pick])) {
        pick = c;
      }
    }
    ++counts[pick];
    ++assigned;
  }
  return counts;
}

/// Seeds X' with per-class samples of the training embeddings plus
/// N(0, noise²) jitter. `train_embeddings` rows align with `train_labels`.
inline CondensedGraph init_condensed(const DenseMatrix& train_embeddings,
                                     std::span<const int> train_labels, int num_classes,
                                     double ratio, std::size_t source_nodes,
                                     std::uint64_t seed, double noise = 1e-3) {
  detail::require(static_cast<std::size_t>(train_embeddings.rows()) == train_labels.size(),
                  "init_condensed: embeddings and labels disagree");
  detail::require(ratio > 0.0, "init_condensed: ratio must be positive");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < train_labels.size(); ++i) {
    detail::require(train_labels[i] >= 0 && train_labels[i] < num_classes,
                    "init_condensed: label out of range");
    members[static_cast<std::size_t>(train_labels[i])].push_back(i);
  }
  std::vector<std::size_t> sizes(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) {
      throw PreconditionError("init_condensed: class " + std::to_string(c) +
                              " has no labeled training node");
    }
    sizes[c] = members[c].size();
  }
  const auto total = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(source_nodes)));
  const std::vector<std::size_t> counts = allocate_class_counts(total, sizes);

  Rng rng(seed);
  CondensedGraph g;
  g.num_classes = num_classes;
  g.ratio = ratio;
  g.seed = seed;
  g.source_nodes = source_nodes;
  g.features.resize(static_cast<Eigen::Index>(total), train_embeddings.cols());
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    std::vector<std::size_t> pool = members[c];
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
    for (std::size_t k = 0; k < counts[c]; ++k) {
      g.features.row(row) = train_embeddings.row(static_cast<Eigen::Index>(pool[k % pool.size()]));
      for (Eigen::Index col = 0; col < g.features.cols(); ++col) {
        g.features(row, col) += noise * rng.normal();
      }
      g.labels.push_back(static_cast<int>(c));
      ++row;
    }
  }
  g.targets = one_hot(g.labels, num_classes);
  return g;
}

namespace detail {

inline DenseMatrix mask_weights(Eigen::Index rows, Eigen::Index cols,
                                std::span<const std::uint8_t> mask, double& count) {
  DenseMatrix w = DenseMatrix::Ones(rows, cols);
  count = static_cast<double>(rows);
  if (mask.empty()) return w;
  require(mask.size() == static_cast<std::size_t>(rows), "mask size mismatch");
  count = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (mask[static_cast<std::size_t>(r)]) {
      count += 1.0;
    } else {
      w.row(r).setZero();
    }
  }
  return w;
}

}  // namespace detail

/// Mean over masked rows of -Σ_j Y_ij log p_ij. An empty mask selects all rows.
inline double ce_loss(const DenseMatrix& logprobs, const DenseMatrix& y,
                      std::span<const std::uint8_t> mask = {}) {
  require_shape(y, logprobs.rows(), logprobs.cols(), "ce_loss");
  double count = 0.0;
  const DenseMatrix w = detail::mask_weights(y.rows(), y.cols(), mask, count);
  if (count == 0.0) throw PreconditionError("ce_loss: empty mask");
  return -logprobs.cwiseProduct(y).cwiseProduct(w).sum() / count;
}

inline Var ce_loss(Tape& tape, Var logprobs, const DenseMatrix& y,
                   std::span<const std::uint8_t> mask = {}) {
  const auto& lp = tape.value(logprobs);
  require_shape(y, lp.rows(), lp.cols(), "ce_loss");
  double count = 0.0;
  const DenseMatrix w = detail::mask_weights(y.rows(), y.cols(), mask, count);
  if (count == 0.0) throw PreconditionError("ce_loss: empty mask");
  Var weighted = tape.constant(y.cwiseProduct(w));
  return tape.scale(tape.sum(tape.hadamard(logprobs, weighted)), -1.0 / count);
}

/// d/dw of the masked mean cross-entropy of softmax(w · logits / τ) at w = 1:
/// mean_i Σ_j (softmax(z_i/τ)_j - Y_ij) z_ij / τ.
inline double irm_gradient(const DenseMatrix& logits, const DenseMatrix& y, double tau,
                           std::span<const std::uint8_t> mask = {}) {
  require_shape(y, logits.rows(), logits.cols(), "irm_gradient");
  detail::require(tau > 0.0, "irm_gradient: tau must be positive");
  double count = 0.0;
  const DenseMatrix w = detail::mask_weights(y.rows(), y.cols(), mask, count);
  if (count == 0.0) return 0.0;
  const DenseMatrix probs = Tape::log_softmax_rows_value(logits, tau).array().exp().matrix();
  return (probs - y).cwiseProduct(logits / tau).cwiseProduct(w).sum() / count;
}

/// Squared IRM gradient g².
inline double irm_penalty(const DenseMatrix& logits, const DenseMatrix& y, double tau,
                          std::span<const std::uint8_t> mask = {}) {
  const double g = irm_gradient(logits, y, tau, mask);
  return g * g;
}

/// irm_penalty recorded on the tape; differentiable in logits and log τ.
inline Var irm_penalty(Tape& tape, Var logits, Var log_tau, const DenseMatrix& y,
                       std::span<const std::uint8_t> mask = {}) {
  const auto& z = tape.value(logits);
  require_shape(y, z.rows(), z.cols(), "irm_penalty");
  double count = 0.0;
  const DenseMatrix w = detail::mask_weights(y.rows(), y.cols(), mask, count);
  if (count == 0.0) return tape.constant(DenseMatrix::Zero(1, 1));
  Var inv_tau = tape.exp(tape.scale(log_tau, -1.0));
  Var scaled = tape.scale_by(logits, inv_tau);
  Var probs = tape.exp(tape.log_softmax_rows(logits, log_tau));
  Var residual = tape.sub(probs, tape.constant(y));
  Var weighted = tape.hadamard(tape.hadamard(residual, scaled), tape.constant(w));
  Var g = tape.scale(tape.sum(weighted), 1.0 / count);
  return tape.hadamard(g, g);
}

/// Constant inputs of one evaluation of the condensation objective.
struct ObjectiveTerms {
  DenseMatrix base_activations;              // relu(H Θ) for training rows
  std::vector<DenseMatrix> env_activations;  // relu(H^e Θ)
  DenseMatrix targets;                       // one-hot Y of training rows
  DenseMatrix condensed_targets;             // Y'
  DenseMatrix relay_weight;                  // Θ
  double lambda = 5e-3;
  double alpha = 0.5;
  double gamma = 0.5;
};

inline ObjectiveTerms make_objective_terms(const RelayParams& theta, const EnvironmentSet& envs,
                                           const DenseMatrix& targets,
                                           const DenseMatrix& condensed_targets,
                                           const CondenseConfig& cfg) {
  ObjectiveTerms t;
  t.base_activations = transform(theta, envs.base);
  if (cfg.alpha != 0.0) {
    for (const auto& e : envs.envs) t.env_activations.push_back(transform(theta, e));
  }
  t.targets = targets;
  t.condensed_targets = condensed_targets;
  t.relay_weight = theta.weight;
  t.lambda = cfg.lambda;
  t.alpha = cfg.alpha;
  t.gamma = cfg.gamma;
  return t;
}

struct ObjectiveNodes {
  Var total;
  Var readout;  // W^S
  Var base_ce;
  Var env_term;  // mean_e [CE + γ g²], zero when there are no environments
};

/// Records the full objective as a function of X' and log τ.
inline ObjectiveNodes total_loss(Tape& tape, Var xprime, Var log_tau, ObjectiveTerms terms) {
  Var theta = tape.constant(std::move(terms.relay_weight));
  Var p = tape.relu(tape.matmul(xprime, theta));
  Var readout = krr_fit(tape, p, tape.constant(terms.condensed_targets), terms.lambda);

  Var base_logits = tape.matmul(tape.constant(std::move(terms.base_activations)), readout);
  Var base_ce = ce_loss(tape, tape.log_softmax_rows(base_logits, log_tau), terms.targets);

  Var env_term = tape.constant(DenseMatrix::Zero(1, 1));
  const auto env_count = terms.env_activations.size();
  if (env_count > 0) {
    std::optional<Var> acc;
    for (auto& activations : terms.env_activations) {
      Var logits = tape.matmul(tape.constant(std::move(activations)), readout);
      Var ce = ce_loss(tape, tape.log_softmax_rows(logits, log_tau), terms.targets);
      Var term = ce;
      if (terms.gamma != 0.0) {
        term = tape.add(ce, tape.scale(irm_penalty(tape, logits, log_tau, terms.targets),
                                       terms.gamma));
      }
      acc = acc ? tape.add(*acc, term) : term;
    }
    env_term = tape.scale(*acc, 1.0 / static_cast<double>(env_count));
  }
  Var total = terms.alpha == 0.0 ? base_ce
                                 : tape.add(base_ce, tape.scale(env_term, terms.alpha));
  return ObjectiveNodes{total, readout, base_ce, env_term};
}

/// ADAM with β₁ = 0.9, β₂ = 0.999, ε = 1e-8 over X' and log τ.
struct AdamState {
  DenseMatrix m;
  DenseMatrix v;
  double m_tau = 0.0;
  double v_tau = 0.0;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState(Eigen::Index rows, Eigen::Index cols)
      : m(DenseMatrix::Zero(rows, cols)), v(DenseMatrix::Zero(rows, cols)) {}

  void update(DenseMatrix& x, double& log_tau, const DenseMatrix& gx, double g_tau,
              double lr) {
    require_shape(gx, x.rows(), x.cols(), "AdamState::update");
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    m = beta1 * m + (1.0 - beta1) * gx;
    v = beta2 * v + (1.0 - beta2) * gx.cwiseProduct(gx);
    x.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    m_tau = beta1 * m_tau + (1.0 - beta1) * g_tau;
    v_tau = beta2 * v_tau + (1.0 - beta2) * g_tau * g_tau;
    log_tau -= lr * (m_tau / c1) / (std::sqrt(v_tau / c2) + eps);
  }
};

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  detail::require(predicted.size() == truth.size(), "accuracy: size mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline std::vector<int> gather_labels(std::span<const int> labels,
                                      std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

/// Condenses task `task` (1-based) of `seq`.
///
/// Pre-processing propagates tasks t and t-1 and builds the environments.
/// Each iteration then samples Θ, fits the KRR readout on relu(X'Θ), records
/// the objective, and takes one ADAM step on X' and log τ. Every
/// `eval_every` iterations the readout is scored on the task's validation
/// split; the best X' is kept and the loop stops after `patience`
/// evaluations without improvement.
inline CondensedGraph condense(const TaskSequence& seq, const SplitMask& splits, int task,
                               const CondenseConfig& cfg) {
  detail::require(task >= 1 && task <= seq.num_tasks(), "condense: task out of range");
  detail::require(cfg.max_iters >= 0 && cfg.hidden >= 1 && cfg.layers >= 0,
                  "condense: invalid configuration");
  const GraphSnapshot& snapshot = seq.task(task);
  const std::vector<std::size_t> train = splits.nodes(task, Split::kTrain);
  const std::vector<std::size_t> val = splits.nodes(task, Split::kValidation);
  detail::require(!train.empty(), "condense: no training nodes");

  EnvironmentSet envs = temporal_environments(seq, splits, task, cfg.layers, cfg.env,
                                              derive_seed(cfg.seed, 1), cfg.threads);
  const std::vector<int> train_labels = gather_labels(snapshot.labels, train);
  const DenseMatrix targets = one_hot(train_labels, snapshot.num_classes);

  CondensedGraph cond = init_condensed(envs.base, train_labels, snapshot.num_classes,
                                       cfg.ratio, snapshot.num_nodes,
                                       derive_seed(cfg.seed, 2), cfg.init_noise);
  cond.task = task;
  cond.seed = cfg.seed;
  cond.config_hash = config_hash(cfg);
  if (cfg.max_iters == 0) return cond;

  const bool validate_enabled = cfg.eval_every > 0 && !val.empty();
  DenseMatrix val_embeddings;
  std::vector<int> val_labels;
  if (validate_enabled) {
    val_embeddings = gather_rows(propagate(snapshot, cfg.layers).matrix, val);
    val_labels = gather_labels(snapshot.labels, val);
  }

  const std::size_t d = static_cast<std::size_t>(envs.base.cols());
  DenseMatrix xprime = cond.features;
  double log_tau = 0.0;
  AdamState adam(xprime.rows(), xprime.cols());
  DenseMatrix best_x = xprime;
  double best_log_tau = log_tau;
  double best_acc = -1.0;
  int stale = 0;
  int iter = 0;
  double last_loss = 0.0;

  for (; iter < cfg.max_iters; ++iter) {
    const RelayParams theta =
        sample_relay(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(iter)), d,
                     cfg.hidden);
    Tape tape;
    Var x = tape.leaf(xprime);
    DenseMatrix tau_init(1, 1);
    tau_init(0, 0) = log_tau;
    Var lt = tape.leaf(tau_init);
    ObjectiveNodes nodes =
        total_loss(tape, x, lt, make_objective_terms(theta, envs, targets, cond.targets, cfg));
    last_loss = tape.scalar_value(nodes.total);
    if (!std::isfinite(last_loss)) {
      throw NumericalError("condense: non-finite loss at iteration " + std::to_string(iter) +
                           " (task " + std::to_string(task) + ")");
    }

    if (validate_enabled && iter % cfg.eval_every == 0) {
      const DenseMatrix logits = transform(theta, val_embeddings) * tape.value(nodes.readout);
      const double acc = accuracy(row_argmax(logits), val_labels);
      if (acc > best_acc) {
        best_acc = acc;
        best_x = xprime;
        best_log_tau = log_tau;
        stale = 0;
      } else {
        ++stale;
      }
      cond.metrics.best_accuracy_history.push_back(best_acc);
      if (stale >= cfg.patience) {
        ++iter;
        break;
      }
    }

    const Gradients grads = tape.backward(nodes.total);
    adam.update(xprime, log_tau, grads.at(x), grads.at(lt)(0, 0), cfg.lr);
  }

  if (validate_enabled) {
    cond.features = std::move(best_x);
    cond.log_tau = best_log_tau;
  } else {
    cond.features = std::move(xprime);
    cond.log_tau = log_tau;
  }
  cond.metrics.best_val_accuracy = best_acc;
  cond.metrics.iterations = iter;
  cond.metrics.final_loss = last_loss;
  return cond;
}

}  // namespace opengc
