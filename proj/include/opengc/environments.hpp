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

// Temporal environments for invariance condensation.
//
// An environment perturbs every training embedding H_i of the current task
// by the normalized residual of a random same-class donor j:
//
//   Ĥ_i = H_i + ε_i ΔH̄_j,   ε_i = δ_i · cos(H_{t,i}, H_{t-1,j}) · η,
//
// with ΔH_j = H_{t,j} - H_{t-1,j} and δ_i drawn from a degree-calibrated
// Beta distribution. When no history exists, environments come from
// re-propagating the graph under random edge and feature-column dropout.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "opengc/dense.hpp"
#include "opengc/error.hpp"
#include "opengc/graph.hpp"
#include "opengc/propagation.hpp"
#include "opengc/rng.hpp"

namespace opengc {

/// Beta(c·degree, 1) as printed (δ concentrates near 1 for high degree), or
/// Beta(1, c·degree) where high degree yields small δ.
enum class BetaMode { kLiteral, kIntent };

/// Where drop-edge/drop-feature environments are used: only when the task
/// has no history at all, or additionally for every class without donors.
enum class FallbackScope { kNoHistory, kGlobal };

struct EnvironmentConfig {
  double eta = 10.0;
  double c = 10.0;
  BetaMode mode = BetaMode::kLiteral;
  int env_count = 3;
  double drop_edge_rate = 0.2;
  double drop_feature_rate = 0.2;
  FallbackScope fallback_scope = FallbackScope::kNoHistory;
};

struct EnvironmentSet {
  DenseMatrix base;                       // H_t restricted to `rows`
  std::vector<DenseMatrix> envs;          // one per environment, same shape
  std::vector<std::size_t> rows;          // node ids of base rows
  std::vector<std::size_t> donor_misses;  // passthrough rows per environment
  bool used_fallback = false;

  int env_count() const { return static_cast<int>(envs.size()); }
};

/// Unit-normalized per-node residuals for the nodes shared by two tasks.
struct ResidualTable {
  DenseMatrix rows;
  std::vector<std::uint8_t> valid;  // raw residual norm >= 1e-12
};

inline constexpr double kMinResidualNorm = 1e-12;

/// Residuals H_t[i] - H_{t-1}[i] for the first `previous.rows()` nodes.
inline ResidualTable residuals(const DenseMatrix& current, const DenseMatrix& previous) {
  if (previous.rows() > current.rows() || previous.cols() != current.cols()) {
    throw PreconditionError("residuals: shape mismatch on common rows");
  }
  ResidualTable table;
  table.rows = current.topRows(previous.rows()) - previous;
  table.valid.assign(static_cast<std::size_t>(previous.rows()), 0);
  for (Eigen::Index i = 0; i < table.rows.rows(); ++i) {
    const double norm = table.rows.row(i).norm();
    if (norm >= kMinResidualNorm) {
      table.rows.row(i) /= norm;
      table.valid[static_cast<std::size_t>(i)] = 1;
    }
  }
  return table;
}

/// δ · cos · η.
inline double epsilon_from(double delta, double cosine, double eta) {
  return delta * cosine * eta;
}

/// Draws δ from the degree-calibrated Beta (one uniform) and returns ε.
inline double sample_epsilon(double degree, double cosine, double eta, double c,
                             BetaMode mode, Rng& rng) {
  detail::require(degree >= 1.0, "sample_epsilon: degree must be >= 1");
  detail::require(c > 0.0 && eta >= 0.0, "sample_epsilon: c > 0 and eta >= 0 required");
  const double shape = c * degree;
  const double delta =
      mode == BetaMode::kLiteral ? rng.beta(shape, 1.0) : rng.beta(1.0, shape);
  return epsilon_from(delta, cosine, eta);
}

inline double cosine_similarity(const auto& a, const auto& b) {
  const double denom = a.norm() * b.norm();
  return denom > 0.0 ? a.dot(b) / denom : 0.0;
}

namespace detail {

// Runs job(e) for e in [0, count) on up to `threads` workers. Each job
// writes only its own slot, so results do not depend on scheduling.
template <typename Job>
void run_indexed(int count, int threads, Job&& job) {
  if (threads <= 1 || count <= 1) {
    for (int e = 0; e < count; ++e) job(e);
    return;
  }
  std::vector<std::thread> workers;
  const int n = std::min(threads, count);
  for (int w = 0; w < n; ++w) {
    workers.emplace_back([&, w] {
      for (int e = w; e < count; e += n) job(e);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace detail

/// Residual-transplant environments over the training rows of task t.
///
/// `labels` and `degrees` index all nodes of task t; `degrees` is the
/// calibration degree (isolated nodes count as 1). Donors are training rows
/// that also exist in task t-1 and have a valid residual. Per environment e
/// the random stream is derive_seed(seed, e); for each row in order it draws
/// the donor index, then δ.
inline EnvironmentSet generate_environments(const DenseMatrix& h_current,
                                            const DenseMatrix& h_previous,
                                            std::span<const std::size_t> train_rows,
                                            std::span<const int> labels,
                                            std::span<const double> degrees,
                                            const EnvironmentConfig& cfg,
                                            std::uint64_t seed, int threads = 1) {
  detail::require(cfg.env_count >= 1, "generate_environments: env_count must be >= 1");
  detail::require(labels.size() == static_cast<std::size_t>(h_current.rows()) &&
                      degrees.size() == labels.size(),
                  "generate_environments: labels/degrees must cover every node");
  const ResidualTable table = residuals(h_current, h_previous);
  const auto common = static_cast<std::size_t>(h_previous.rows());

  int num_classes = 0;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);
  std::vector<std::vector<std::size_t>> donors(static_cast<std::size_t>(num_classes));
  for (std::size_t node : train_rows) {
    if (node < common && table.valid[node]) {
      donors[static_cast<std::size_t>(labels[node])].push_back(node);
    }
  }

  EnvironmentSet set;
  set.rows.assign(train_rows.begin(), train_rows.end());
  set.base = gather_rows(h_current, train_rows);
  set.envs.assign(static_cast<std::size_t>(cfg.env_count), DenseMatrix());
  set.donor_misses.assign(static_cast<std::size_t>(cfg.env_count), 0);

  detail::run_indexed(cfg.env_count, threads, [&](int e) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    DenseMatrix env = set.base;
    std::size_t misses = 0;
    for (std::size_t r = 0; r < set.rows.size(); ++r) {
      const std::size_t i = set.rows[r];
      const auto& pool = donors[static_cast<std::size_t>(labels[i])];
      if (pool.empty()) {
        ++misses;
        continue;
      }
      const std::size_t j = pool[rng.index(pool.size())];
      const double cosine = cosine_similarity(h_current.row(static_cast<Eigen::Index>(i)),
                                              h_previous.row(static_cast<Eigen::Index>(j)));
      const double eps = sample_epsilon(std::max(degrees[i], 1.0), cosine, cfg.eta,
                                        cfg.c, cfg.mode, rng);
      env.row(static_cast<Eigen::Index>(r)) +=
          eps * table.rows.row(static_cast<Eigen::Index>(j));
    }
    set.envs[static_cast<std::size_t>(e)] = std::move(env);
    set.donor_misses[static_cast<std::size_t>(e)] = misses;
  });
  return set;
}

/// Keeps each undirected edge independently with probability 1 - rate.
inline std::vector<Edge> drop_edges(std::span<const Edge> edges, double rate, Rng& rng) {
  std::vector<Edge> kept;
  kept.reserve(edges.size());
  for (const Edge& edge : edges) {
    if (!rng.bernoulli(rate)) kept.push_back(edge);
  }
  return kept;
}

/// Environments from independent drop-edge / drop-feature corruptions of
/// `snapshot`, re-propagated with `layers` layers and restricted to `rows`.
inline EnvironmentSet fallback_environments(const GraphSnapshot& snapshot, int layers,
                                            std::span<const std::size_t> rows,
                                            double drop_edge_rate,
                                            double drop_feature_rate, int env_count,
                                            std::uint64_t seed, int threads = 1) {
  detail::require(drop_edge_rate >= 0.0 && drop_edge_rate < 1.0 &&
                      drop_feature_rate >= 0.0 && drop_feature_rate < 1.0,
                  "fallback_environments: rates must lie in [0, 1)");
  detail::require(env_count >= 1, "fallback_environments: env_count must be >= 1");
  EnvironmentSet set;
  set.used_fallback = true;
  set.rows.assign(rows.begin(), rows.end());
  set.base = gather_rows(propagate(snapshot, layers).matrix, rows);
  set.envs.assign(static_cast<std::size_t>(env_count), DenseMatrix());
  set.donor_misses.assign(static_cast<std::size_t>(env_count), 0);
  const std::vector<Edge> edges = undirected_edges(snapshot.adjacency);

  detail::run_indexed(env_count, threads, [&](int e) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    const std::vector<Edge> kept = drop_edges(edges, drop_edge_rate, rng);
    GraphSnapshot corrupted;
    corrupted.task_index = snapshot.task_index;
    corrupted.num_nodes = snapshot.num_nodes;
    corrupted.adjacency = build_undirected_adjacency(snapshot.num_nodes, kept);
    corrupted.features = snapshot.features;
    for (Eigen::Index col = 0; col < corrupted.features.cols(); ++col) {
      if (rng.bernoulli(drop_feature_rate)) corrupted.features.col(col).setZero();
    }
    set.envs[static_cast<std::size_t>(e)] =
        gather_rows(propagate(corrupted, layers).matrix, rows);
  });
  return set;
}

/// Environments for condensing task `task` of `seq`: residual transplants
/// when task t-1 exists, drop-edge/drop-feature otherwise. With
/// FallbackScope::kGlobal, rows whose class has no donor take their row from
/// the fallback environment instead of passing through.
inline EnvironmentSet temporal_environments(const TaskSequence& seq, const SplitMask& splits,
                                            int task, int layers,
                                            const EnvironmentConfig& cfg,
                                            std::uint64_t seed, int threads = 1) {
  const GraphSnapshot& current = seq.task(task);
  const std::vector<std::size_t> train = splits.nodes(task, Split::kTrain);
  if (task == 1) {
    return fallback_environments(current, layers, train, cfg.drop_edge_rate,
                                 cfg.drop_feature_rate, cfg.env_count, seed, threads);
  }
  const Embeddings h_current = propagate(current, layers);
  const Embeddings h_previous = propagate(seq.task(task - 1), layers);
  std::vector<double> degrees(current.num_nodes);
  for (std::size_t i = 0; i < current.num_nodes; ++i) {
    degrees[i] = std::max<double>(1.0, static_cast<double>(current.degree(i)));
  }
  EnvironmentSet set = generate_environments(h_current.matrix, h_previous.matrix, train,
                                             current.labels, degrees, cfg, seed, threads);
  if (cfg.fallback_scope != FallbackScope::kGlobal) return set;

  bool any_miss = false;
  for (std::size_t m : set.donor_misses) any_miss = any_miss || m > 0;
  if (!any_miss) return set;

  // Classes with at least one donor.
  const ResidualTable table = residuals(h_current.matrix, h_previous.matrix);
  std::vector<std::uint8_t> has_donor(static_cast<std::size_t>(current.num_classes), 0);
  for (std::size_t node : train) {
    if (node < table.valid.size() && table.valid[node]) {
      has_donor[static_cast<std::size_t>(current.labels[node])] = 1;
    }
  }
  const EnvironmentSet fallback =
      fallback_environments(current, layers, train, cfg.drop_edge_rate,
                            cfg.drop_feature_rate, cfg.env_count,
                            derive_seed(seed, 0xfa11bac4ULL), threads);
  for (std::size_t e = 0; e < set.envs.size(); ++e) {
    for (std::size_t r = 0; r < set.rows.size(); ++r) {
      if (!has_donor[static_cast<std::size_t>(current.labels[set.rows[r]])]) {
        set.envs[e].row(static_cast<Eigen::Index>(r)) =
            fallback.envs[e].row(static_cast<Eigen::Index>(r));
      }
    }
    set.donor_misses[e] = 0;
  }
  set.used_fallback = true;
  return set;
}

}  // namespace opengc
