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

#include "opengc/condenser.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "opengc/datagen.hpp"
#include "test_util.hpp"

namespace opengc {
namespace {

using testing::random_matrix;

TEST(AllocateClassCountsTest, Proportional) {
  const std::vector<std::size_t> sizes = {50, 30, 20};
  EXPECT_EQ(allocate_class_counts(10, sizes), (std::vector<std::size_t>{5, 3, 2}));
}

TEST(AllocateClassCountsTest, FloorOfOne) {
  const std::vector<std::size_t> sizes = {98, 1, 1};
  EXPECT_EQ(allocate_class_counts(3, sizes), (std::vector<std::size_t>{1, 1, 1}));
}

TEST(AllocateClassCountsTest, SumsToTotal) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> sizes(1 + rng.index(8));
    for (auto& s : sizes) s = 1 + rng.index(200);
    const std::size_t total = sizes.size() + rng.index(100);
    const auto counts = allocate_class_counts(total, sizes);
    std::size_t sum = 0;
    for (auto c : counts) {
      EXPECT_GE(c, 1u);
      sum += c;
    }
    EXPECT_EQ(sum, total);
  }
}

TEST(AllocateClassCountsTest, RatioTooSmall) {
  const std::vector<std::size_t> sizes = {10, 10, 10};
  try {
    allocate_class_counts(2, sizes);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("ratio too small"), std::string::npos);
  }
}

TEST(InitCondensedTest, DeterministicAndLabeled) {
  Rng rng(4);
  const DenseMatrix h = random_matrix(rng, 30, 4);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  const auto a = init_condensed(h, labels, 3, 0.1, 60, 7);
  const auto b = init_condensed(h, labels, 3, 0.1, 60, 7);
  EXPECT_EQ(a.features, b.features);
  ASSERT_EQ(a.num_nodes(), 6u);
  EXPECT_EQ(a.labels, (std::vector<int>{0, 0, 1, 1, 2, 2}));
  EXPECT_EQ(a.targets, one_hot(a.labels, 3));
  // Each row sits within noise of some training row of its class.
  for (Eigen::Index r = 0; r < a.features.rows(); ++r) {
    double nearest = 1e9;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      if (labels[static_cast<std::size_t>(i)] != a.labels[static_cast<std::size_t>(r)]) continue;
      nearest = std::min(nearest, (a.features.row(r) - h.row(i)).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(nearest, 1e-2);
  }
  std::vector<int> missing = labels;
  for (int& y : missing) y = y == 2 ? 0 : y;
  EXPECT_THROW(init_condensed(h, missing, 3, 0.1, 60, 7), PreconditionError);
}

TEST(CeLossTest, Examples) {
  DenseMatrix lp(1, 2), y(1, 2);
  lp << std::log(0.5), std::log(0.5);
  y << 1, 0;
  EXPECT_NEAR(ce_loss(lp, y), 0.693147, 1e-6);
  lp << 0.0, -50.0;
  EXPECT_EQ(ce_loss(lp, y), 0.0);

  DenseMatrix lp2(2, 2), y2(2, 2);
  lp2 << std::log(0.5), std::log(0.5), 0.0, -50.0;
  y2 << 1, 0, 1, 0;
  EXPECT_NEAR(ce_loss(lp2, y2), 0.346574, 1e-6);
  const std::vector<std::uint8_t> mask = {0, 1};
  EXPECT_EQ(ce_loss(lp2, y2, mask), 0.0);
  const std::vector<std::uint8_t> none = {0, 0};
  EXPECT_THROW(ce_loss(lp2, y2, none), PreconditionError);
}

TEST(IrmTest, HandCase) {
  DenseMatrix z(1, 2), y(1, 2);
  z << 2, 0;
  y << 1, 0;
  EXPECT_NEAR(irm_gradient(z, y, 1.0), -0.238406, 1e-6);
  EXPECT_NEAR(irm_penalty(z, y, 1.0), 0.056837, 1e-6);
}

// Mean cross-entropy of softmax(w z / τ).
double scaled_ce(const DenseMatrix& z, const DenseMatrix& y, double tau, double w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::RowVectorXd s = w * z.row(i) / tau;
    const double mx = s.maxCoeff();
    const double lse = mx + std::log((s.array() - mx).exp().sum());
    for (Eigen::Index j = 0; j < z.cols(); ++j) total -= y(i, j) * (s(j) - lse);
  }
  return total / static_cast<double>(z.rows());
}

TEST(IrmTest, MatchesFiniteDifferenceInScale) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseMatrix z = random_matrix(rng, 7, 4, 2.0);
    std::vector<int> labels(7);
    for (auto& l : labels) l = static_cast<int>(rng.index(4));
    const DenseMatrix y = one_hot(labels, 4);
    const double tau = 0.5 + rng.uniform();
    const double h = 1e-5;
    const double fd = (scaled_ce(z, y, tau, 1 + h) - scaled_ce(z, y, tau, 1 - h)) / (2 * h);
    EXPECT_NEAR(irm_gradient(z, y, tau), fd, 1e-8);
  }
}

TEST(IrmTest, InvariantToJointScaling) {
  Rng rng(6);
  const DenseMatrix z = random_matrix(rng, 5, 3);
  const DenseMatrix y = one_hot(std::vector<int>{0, 1, 2, 0, 1}, 3);
  EXPECT_NEAR(irm_gradient(3.0 * z, y, 3.0), irm_gradient(z, y, 1.0), 1e-12);
}

TEST(IrmTest, TapeMatchesValueAndGradient) {
  Rng rng(7);
  const DenseMatrix z = random_matrix(rng, 6, 3);
  const DenseMatrix y = one_hot(std::vector<int>{0, 1, 2, 2, 1, 0}, 3);
  const double log_tau = 0.3;
  Tape tape;
  Var zv = tape.leaf(z);
  Var lt = tape.constant(DenseMatrix::Constant(1, 1, log_tau));
  EXPECT_NEAR(tape.scalar_value(irm_penalty(tape, zv, lt, y)),
              irm_penalty(z, y, std::exp(log_tau)), 1e-14);
  const auto r = grad_check(
      [&](Tape& t, Var x) {
        return irm_penalty(t, x, t.constant(DenseMatrix::Constant(1, 1, log_tau)), y);
      },
      z, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-6);
}

struct Toy {
  ObjectiveTerms terms;
  DenseMatrix xprime;
};

Toy toy_objective(std::uint64_t seed, double alpha, double gamma, int envs = 2) {
  Rng rng(seed);
  const Eigen::Index n = 60, np = 6, d = 8;
  const DenseMatrix h = random_matrix(rng, n, d);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(rng.index(3));
  EnvironmentSet set;
  set.base = h;
  for (int e = 0; e < envs; ++e) set.envs.push_back(h + random_matrix(rng, n, d, 0.3));
  CondenseConfig cfg;
  cfg.alpha = alpha;
  cfg.gamma = gamma;
  cfg.lambda = 0.1;
  const RelayParams theta = sample_relay(seed + 1, static_cast<std::size_t>(d), 16);
  const DenseMatrix yp = one_hot(std::vector<int>{0, 0, 1, 1, 2, 2}, 3);
  return Toy{make_objective_terms(theta, set, one_hot(labels, 3), yp, cfg),
             random_matrix(rng, np, d)};
}

TEST(TotalLossTest, GradientMatchesFiniteDifferences) {
  const Toy t = toy_objective(11, 0.5, 0.5);
  const double log_tau = 0.2;
  const auto rx = grad_check(
      [&](Tape& tape, Var x) {
        return total_loss(tape, x, tape.constant(DenseMatrix::Constant(1, 1, log_tau)), t.terms)
            .total;
      },
      t.xprime, 1e-6);
  EXPECT_GT(rx.compared, 0u);
  EXPECT_LE(rx.max_rel_error, 1e-4);
  const auto rt = grad_check(
      [&](Tape& tape, Var lt) { return total_loss(tape, tape.constant(t.xprime), lt, t.terms).total; },
      DenseMatrix::Constant(1, 1, log_tau), 1e-6);
  EXPECT_EQ(rt.compared, 1u);
  EXPECT_LE(rt.max_rel_error, 1e-4);
}

TEST(TotalLossTest, ZeroAlphaIsBaseCrossEntropy) {
  const Toy t = toy_objective(12, 0.0, 0.5);
  Tape tape;
  const auto nodes = total_loss(tape, tape.leaf(t.xprime), tape.constant(DenseMatrix::Zero(1, 1)),
                                t.terms);
  EXPECT_EQ(tape.scalar_value(nodes.total), tape.scalar_value(nodes.base_ce));
  // Value oracle: KRR readout, logits, CE.
  const DenseMatrix p = (t.xprime * t.terms.relay_weight).cwiseMax(0.0);
  const DenseMatrix w = krr_fit(p, t.terms.condensed_targets, t.terms.lambda);
  const DenseMatrix lp = Tape::log_softmax_rows_value(t.terms.base_activations * w, 1.0);
  EXPECT_NEAR(tape.scalar_value(nodes.total), ce_loss(lp, t.terms.targets), 1e-10);
}

TEST(TotalLossTest, IdenticalEnvironmentsWithoutPenalty) {
  Toy t = toy_objective(13, 0.5, 0.0, 3);
  for (auto& e : t.terms.env_activations) e = t.terms.base_activations;
  Tape tape;
  const auto nodes = total_loss(tape, tape.leaf(t.xprime), tape.constant(DenseMatrix::Zero(1, 1)),
                                t.terms);
  EXPECT_NEAR(tape.scalar_value(nodes.total), 1.5 * tape.scalar_value(nodes.base_ce), 1e-12);
}

TEST(TotalLossTest, EnvironmentTermOracle) {
  const Toy t = toy_objective(14, 0.7, 0.4, 2);
  const double log_tau = -0.1, tau = std::exp(log_tau);
  Tape tape;
  const auto nodes = total_loss(tape, tape.leaf(t.xprime),
                                tape.constant(DenseMatrix::Constant(1, 1, log_tau)), t.terms);
  const DenseMatrix p = (t.xprime * t.terms.relay_weight).cwiseMax(0.0);
  const DenseMatrix w = krr_fit(p, t.terms.condensed_targets, t.terms.lambda);
  auto ce_of = [&](const DenseMatrix& a) {
    return scaled_ce(a * w, t.terms.targets, tau, 1.0);
  };
  double env = 0.0;
  for (const auto& a : t.terms.env_activations) {
    env += ce_of(a) + 0.4 * irm_penalty(a * w, t.terms.targets, tau);
  }
  env /= 2.0;
  EXPECT_NEAR(tape.scalar_value(nodes.total), ce_of(t.terms.base_activations) + 0.7 * env, 1e-10);
}

class CondenseTest : public ::testing::Test {
 protected:
  TaskSequence seq = generate_drift_sbm(drift_sbm_preset("tiny", 21));
  SplitMask splits = make_splits(seq, SplitRatios{}, 21);

  CondenseConfig config(std::uint64_t seed) const {
    CondenseConfig c;
    c.seed = seed;
    c.ratio = 0.1;
    c.hidden = 64;
    c.max_iters = 40;
    c.eval_every = 5;
    return c;
  }
};

TEST_F(CondenseTest, ZeroIterationsReturnsInitialization) {
  CondenseConfig c = config(3);
  c.max_iters = 0;
  const CondensedGraph g = condense(seq, splits, 2, c);
  const auto envs = temporal_environments(seq, splits, 2, c.layers, c.env, derive_seed(3, 1));
  const auto train = splits.nodes(2, Split::kTrain);
  const auto init = init_condensed(envs.base, gather_labels(seq.task(2).labels, train),
                                   seq.task(2).num_classes, c.ratio, seq.task(2).num_nodes,
                                   derive_seed(3, 2), c.init_noise);
  EXPECT_EQ(g.features, init.features);
  EXPECT_EQ(g.labels, init.labels);
  EXPECT_EQ(g.log_tau, 0.0);
  EXPECT_EQ(g.num_nodes(), 12u);
}

TEST_F(CondenseTest, BestHistoryNonDecreasing) {
  const CondensedGraph g = condense(seq, splits, 2, config(4));
  const auto& h = g.metrics.best_accuracy_history;
  ASSERT_FALSE(h.empty());
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_GE(h[i], h[i - 1]);
  EXPECT_EQ(g.metrics.best_val_accuracy, h.back());
  EXPECT_LE(g.metrics.iterations, 40);
  EXPECT_TRUE(all_finite(g.features));
}

TEST_F(CondenseTest, FiniteLossAtInitialization) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CondenseConfig c = config(seed);
    const auto envs = temporal_environments(seq, splits, 3, c.layers, c.env, derive_seed(seed, 1));
    const auto train = splits.nodes(3, Split::kTrain);
    const auto labels = gather_labels(seq.task(3).labels, train);
    const auto init = init_condensed(envs.base, labels, seq.task(3).num_classes, c.ratio,
                                     seq.task(3).num_nodes, derive_seed(seed, 2));
    const RelayParams theta = sample_relay(derive_seed(seed, 1000), 8, c.hidden);
    Tape tape;
    const auto nodes = total_loss(
        tape, tape.leaf(init.features), tape.constant(DenseMatrix::Zero(1, 1)),
        make_objective_terms(theta, envs, one_hot(labels, seq.task(3).num_classes), init.targets,
                             c));
    EXPECT_TRUE(std::isfinite(tape.scalar_value(nodes.total))) << "seed " << seed;
  }
}

TEST_F(CondenseTest, Deterministic) {
  CondenseConfig c = config(5);
  const CondensedGraph a = condense(seq, splits, 3, c);
  c.threads = 2;
  const CondensedGraph b = condense(seq, splits, 3, c);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.log_tau, b.log_tau);
  EXPECT_EQ(a.metrics.iterations, b.metrics.iterations);
  EXPECT_EQ(a.config_hash, b.config_hash);
}

TEST_F(CondenseTest, RatioTooSmall) {
  CondenseConfig c = config(6);
  c.ratio = 0.01;
  EXPECT_THROW(condense(seq, splits, 2, c), PreconditionError);
}

TEST(ConfigHashTest, SensitiveToSettings) {
  CondenseConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.alpha = 0.25;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(fnv1a(""), 1469598103934665603ULL);
}

}  // namespace
}  // namespace opengc
