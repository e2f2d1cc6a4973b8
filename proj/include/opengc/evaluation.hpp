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

// Sequential open-set evaluation. A model built at task i is frozen and
// scored on the test nodes of every later task j >= i; test nodes whose
// class did not exist at task i count as correct only if predicted unknown.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "opengc/condenser.hpp"
#include "opengc/dense.hpp"
#include "opengc/error.hpp"
#include "opengc/graph.hpp"
#include "opengc/openset.hpp"
#include "opengc/propagation.hpp"

namespace opengc {

/// Upper-triangular accuracies M(i, j), 1 <= i <= j <= m. Rows before
/// `first_task` are absent.
class PerformanceMatrix {
 public:
  PerformanceMatrix() = default;
  explicit PerformanceMatrix(int num_tasks, int first_task = 1)
      : m_(num_tasks),
        first_(first_task),
        cells_(static_cast<std::size_t>(num_tasks * num_tasks)),
        counts_(cells_.size(), 0) {
    detail::require(num_tasks >= 1 && first_task >= 1 && first_task <= num_tasks,
                    "PerformanceMatrix: invalid task range");
  }

  int num_tasks() const { return m_; }
  int first_task() const { return first_; }

  void set(int i, int j, double accuracy, std::size_t count = 0) {
    detail::require(i >= first_ && i <= j && j <= m_, "PerformanceMatrix::set: outside upper triangle");
    detail::require(accuracy >= 0.0 && accuracy <= 1.0,
                    "PerformanceMatrix::set: accuracy outside [0, 1]");
    cells_[slot(i, j)] = accuracy;
    counts_[slot(i, j)] = count;
  }

  std::optional<double> at(int i, int j) const {
    if (i < 1 || j < 1 || i > m_ || j > m_ || i > j) return std::nullopt;
    return cells_[slot(i, j)];
  }
  std::size_t count(int i, int j) const { return counts_[slot(i, j)]; }

  /// (1 / (m - i + 1)) Σ_{j >= i} M(i, j).
  double row_average(int i) const {
    double sum = 0.0;
    for (int j = i; j <= m_; ++j) {
      const auto v = at(i, j);
      if (!v) throw PreconditionError("PerformanceMatrix: missing cell in row " + std::to_string(i));
      sum += *v;
    }
    return sum / static_cast<double>(m_ - i + 1);
  }

 private:
  std::size_t slot(int i, int j) const {
    return static_cast<std::size_t>((i - 1) * m_ + (j - 1));
  }

  int m_ = 0;
  int first_ = 1;
  std::vector<std::optional<double>> cells_;
  std::vector<std::size_t> counts_;
};

/// Mean over the available rows of each row's average accuracy. With all
/// rows present this is (1/m) Σ_i (1/(m-i+1)) Σ_{j>=i} M(i, j).
inline double map_score(const PerformanceMatrix& m) {
  double total = 0.0;
  for (int i = m.first_task(); i <= m.num_tasks(); ++i) total += m.row_average(i);
  return total / static_cast<double>(m.num_tasks() - m.first_task() + 1);
}

/// Ground truth of a model built at a task with `known_classes` classes.
inline std::vector<int> openset_truth(std::span<const int> labels, int known_classes) {
  std::vector<int> out(labels.begin(), labels.end());
  for (int& y : out) {
    if (y >= known_classes) y = kUnknown;
  }
  return out;
}

/// Predicts labels (class id or kUnknown) for `nodes` of task `eval_task`.
using TaskPredictor =
    std::function<std::vector<int>(int eval_task, std::span<const std::size_t> nodes)>;
/// Builds the frozen predictor for a model created at `build_task`.
using PredictorFactory = std::function<TaskPredictor(int build_task)>;

/// Fills M(i, j) for first_task <= i <= j <= m using predictors from
/// `factory`; no state is carried between the j's of a row.
inline PerformanceMatrix assemble_performance(const TaskSequence& seq, const SplitMask& splits,
                                              const PredictorFactory& factory,
                                              int first_task = 1) {
  const int m = seq.num_tasks();
  detail::require(m >= 1, "evaluate_sequence: empty sequence");
  PerformanceMatrix out(m, first_task);
  for (int i = first_task; i <= m; ++i) {
    const TaskPredictor predict = factory(i);
    const int known = seq.task(i).num_classes;
    for (int j = i; j <= m; ++j) {
      const auto test = splits.nodes(j, Split::kTest);
      const auto truth = openset_truth(gather_labels(seq.task(j).labels, test), known);
      const auto predicted = predict(j, test);
      out.set(i, j, accuracy(predicted, truth), test.size());
    }
  }
  return out;
}

struct EvaluationConfig {
  CondenseConfig condense;
  DownstreamConfig downstream;
  OpensetConfig openset;
  int first_task = 1;
};

/// Propagated embeddings of every task, computed once.
inline std::vector<DenseMatrix> propagate_all(const TaskSequence& seq, int layers) {
  std::vector<DenseMatrix> out;
  out.reserve(static_cast<std::size_t>(seq.num_tasks()));
  for (const auto& s : seq.snapshots) out.push_back(propagate(s, layers).matrix);
  return out;
}

/// Predictor factory around any classifier trainer. `train(i)` returns the
/// downstream classifier for task i; the open-set model is calibrated on the
/// task-i training and validation splits.
inline PredictorFactory openset_factory(
    const TaskSequence& seq, const SplitMask& splits,
    std::shared_ptr<const std::vector<DenseMatrix>> embeddings,
    std::function<LinearClassifier(int)> train, OpensetConfig openset) {
  return [&seq, &splits, embeddings, train = std::move(train), openset](int i) -> TaskPredictor {
    const DenseMatrix& h = (*embeddings)[static_cast<std::size_t>(i - 1)];
    const auto train_rows = splits.nodes(i, Split::kTrain);
    const auto val_rows = splits.nodes(i, Split::kValidation);
    auto clf = std::make_shared<LinearClassifier>(train(i));
    auto model = std::make_shared<OpensetModel>(calibrate_openset(
        *clf, gather_rows(h, train_rows), gather_labels(seq.task(i).labels, train_rows),
        gather_rows(h, val_rows), openset));
    return [embeddings, clf, model](int j, std::span<const std::size_t> nodes) {
      const DenseMatrix& hj = (*embeddings)[static_cast<std::size_t>(j - 1)];
      return openset_predict(*clf, *model, gather_rows(hj, nodes));
    };
  };
}

/// Condense each task, train the downstream classifier on the condensed
/// graph, calibrate open-set recognition and score all later tasks.
/// `condense_fn(i)` produces the condensed graph of task i.
inline PerformanceMatrix evaluate_sequence(
    const TaskSequence& seq, const SplitMask& splits,
    const std::function<CondensedGraph(int)>& condense_fn, const EvaluationConfig& cfg) {
  auto embeddings = std::make_shared<const std::vector<DenseMatrix>>(
      propagate_all(seq, cfg.condense.layers));
  const DownstreamConfig downstream = cfg.downstream;
  auto train = [&condense_fn, downstream](int i) {
    return train_downstream(condense_fn(i), downstream);
  };
  return assemble_performance(
      seq, splits, openset_factory(seq, splits, embeddings, train, cfg.openset),
      cfg.first_task);
}

inline PerformanceMatrix evaluate_sequence(const TaskSequence& seq, const SplitMask& splits,
                                           const EvaluationConfig& cfg) {
  return evaluate_sequence(
      seq, splits,
      [&](int i) {
        CondenseConfig c = cfg.condense;
        c.seed = derive_seed(cfg.condense.seed, static_cast<std::uint64_t>(i));
        return condense(seq, splits, i, c);
      },
      cfg);
}

/// Same protocol with the downstream classifier trained on every training
/// node of the original graph instead of the condensed graph.
inline PerformanceMatrix evaluate_whole_graph(const TaskSequence& seq, const SplitMask& splits,
                                              const EvaluationConfig& cfg) {
  auto embeddings = std::make_shared<const std::vector<DenseMatrix>>(
      propagate_all(seq, cfg.condense.layers));
  const DownstreamConfig downstream = cfg.downstream;
  auto train = [&seq, &splits, embeddings, downstream](int i) {
    const auto rows = splits.nodes(i, Split::kTrain);
    return train_softmax_regression(gather_rows((*embeddings)[static_cast<std::size_t>(i - 1)], rows),
                                    gather_labels(seq.task(i).labels, rows),
                                    seq.task(i).num_classes, downstream);
  };
  return assemble_performance(
      seq, splits, openset_factory(seq, splits, embeddings, train, cfg.openset),
      cfg.first_task);
}

/// Closed-set test accuracy on task `task` of a classifier.
inline double closed_set_accuracy(const LinearClassifier& clf, const TaskSequence& seq,
                                  const SplitMask& splits, int task, int layers) {
  const auto test = splits.nodes(task, Split::kTest);
  const DenseMatrix h = gather_rows(propagate(seq.task(task), layers).matrix, test);
  return accuracy(row_argmax(clf.logits(h)), gather_labels(seq.task(task).labels, test));
}

}  // namespace opengc
