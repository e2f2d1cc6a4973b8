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

// Reverse-mode differentiation over dense matrices.
//
// A Tape records primitive applications in evaluation order. Every node
// holds its forward value; backward() sweeps the record once in reverse and
// accumulates cotangents into the nodes that require gradients. Only nodes
// created with leaf() are differentiable inputs; constants and anything
// computed purely from constants are skipped during the sweep.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <unordered_map>
#include <vector>

#include "opengc/dense.hpp"
#include "opengc/error.hpp"
#include "opengc/linalg.hpp"

namespace opengc {

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Gradients of a scalar with respect to every leaf of a tape.
class Gradients {
 public:
  const DenseMatrix& at(Var leaf) const {
    auto it = grads_.find(leaf.id);
    if (it == grads_.end()) throw PreconditionError("Gradients::at: not a leaf");
    return it->second;
  }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, DenseMatrix> grads_;
};

class Tape {
 public:
  enum class Op : std::uint8_t {
    kLeaf,
    kConstant,
    kMatmul,
    kTranspose,
    kAdd,
    kSub,
    kScale,
    kAddIdentity,
    kHadamard,
    kRelu,
    kExp,
    kScaleBy,
    kLogSoftmaxRows,
    kSpdSolve,
    kSum,
  };

  Var leaf(DenseMatrix value) {
    detail::require(all_finite(value), "Tape::leaf: non-finite entries");
    return push(Op::kLeaf, {}, std::move(value), true);
  }

  Var constant(DenseMatrix value) {
    return push(Op::kConstant, {}, std::move(value), false);
  }

  Var matmul(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    detail::require(va.cols() == vb.rows(), "Tape::matmul: dimension mismatch");
    DenseMatrix out = va * vb;
    return push(Op::kMatmul, {a, b}, std::move(out));
  }

  Var transpose(Var a) {
    DenseMatrix out = value(a).transpose();
    return push(Op::kTranspose, {a}, std::move(out));
  }

  Var add(Var a, Var b) {
    same_shape(a, b, "Tape::add");
    DenseMatrix out = value(a) + value(b);
    return push(Op::kAdd, {a, b}, std::move(out));
  }

  Var sub(Var a, Var b) {
    same_shape(a, b, "Tape::sub");
    DenseMatrix out = value(a) - value(b);
    return push(Op::kSub, {a, b}, std::move(out));
  }

  Var scale(Var a, double factor) {
    DenseMatrix out = value(a) * factor;
    Var v = push(Op::kScale, {a}, std::move(out));
    nodes_[v.id].scalar = factor;
    return v;
  }

  /// a + shift * I for square a.
  Var add_identity(Var a, double shift) {
    const auto& va = value(a);
    detail::require(va.rows() == va.cols(), "Tape::add_identity: not square");
    DenseMatrix out = va;
    out.diagonal().array() += shift;
    Var v = push(Op::kAddIdentity, {a}, std::move(out));
    nodes_[v.id].scalar = shift;
    return v;
  }

  Var hadamard(Var a, Var b) {
    same_shape(a, b, "Tape::hadamard");
    DenseMatrix out = value(a).cwiseProduct(value(b));
    return push(Op::kHadamard, {a, b}, std::move(out));
  }

  /// max(x, 0); the subgradient at exactly 0 is 0.
  Var relu(Var a) {
    DenseMatrix out = value(a).cwiseMax(0.0);
    return push(Op::kRelu, {a}, std::move(out));
  }

  Var exp(Var a) {
    DenseMatrix out = value(a).array().exp().matrix();
    return push(Op::kExp, {a}, std::move(out));
  }

  /// a * s for a 1x1 node s.
  Var scale_by(Var a, Var s) {
    require_scalar(s, "Tape::scale_by");
    DenseMatrix out = value(a) * value(s)(0, 0);
    return push(Op::kScaleBy, {a, s}, std::move(out));
  }

  /// Row-wise log softmax of logits / exp(log_tau), max-shifted.
  Var log_softmax_rows(Var logits, Var log_tau) {
    require_scalar(log_tau, "Tape::log_softmax_rows");
    const double tau = std::exp(value(log_tau)(0, 0));
    DenseMatrix out = log_softmax_rows_value(value(logits), tau);
    return push(Op::kLogSoftmaxRows, {logits, log_tau}, std::move(out));
  }

  /// M^{-1} B for SPD M. The Cholesky factor is kept for the backward pass.
  Var spd_solve(Var m, Var b) {
    const auto& vm = value(m);
    const auto& vb = value(b);
    detail::require(vm.rows() == vm.cols() && vb.rows() == vm.rows(),
                    "Tape::spd_solve: dimension mismatch");
    DenseMatrix lower = cholesky_factor(vm);
    DenseMatrix out = vb;
    cholesky_solve_in_place(lower, out);
    Var v = push(Op::kSpdSolve, {m, b}, std::move(out));
    nodes_[v.id].aux = std::move(lower);
    return v;
  }

  /// Sum of all entries as a 1x1 node.
  Var sum(Var a) {
    DenseMatrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(Op::kSum, {a}, std::move(out));
  }

  Var mean(Var a) {
    const auto count = static_cast<double>(value(a).size());
    detail::require(count > 0, "Tape::mean: empty matrix");
    return scale(sum(a), 1.0 / count);
  }

  const DenseMatrix& value(Var v) const { return node(v).value; }
  double scalar_value(Var v) const {
    require_scalar(v, "Tape::scalar_value");
    return value(v)(0, 0);
  }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  Op op(Var v) const { return node(v).op; }
  std::size_t size() const { return nodes_.size(); }

  /// Hash of the sign pattern (x > 0) of every relu input on the tape. Two
  /// evaluations with equal signatures lie on the same smooth piece.
  std::uint64_t relu_signature() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& n : nodes_) {
      if (n.op != Op::kRelu) continue;
      const auto& in = nodes_[n.inputs[0]].value;
      for (Eigen::Index i = 0; i < in.size(); ++i) {
        h ^= in.data()[i] > 0.0 ? 0x9eULL : 0x37ULL;
        h *= 1099511628211ULL;
      }
    }
    return h;
  }

  /// Gradients of the 1x1 node `loss` with respect to every leaf. Each
  /// recorded node is visited once, in reverse order.
  Gradients backward(Var loss) const {
    const auto& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw PreconditionError("Tape::backward: loss is not a scalar node");
    }
    std::vector<DenseMatrix> adj(nodes_.size());
    std::vector<bool> live(nodes_.size(), false);
    adj[loss.id] = DenseMatrix::Ones(1, 1);
    live[loss.id] = true;

    auto accumulate = [&](std::size_t id, DenseMatrix contribution) {
      if (!nodes_[id].requires_grad) return;
      if (!live[id]) {
        adj[id] = std::move(contribution);
        live[id] = true;
      } else {
        adj[id] += contribution;
      }
    };

    for (std::size_t k = loss.id + 1; k-- > 0;) {
      const Node& n = nodes_[k];
      if (!live[k] || !n.requires_grad) continue;
      const DenseMatrix& g = adj[k];
      const std::size_t a = n.inputs[0];
      const std::size_t b = n.inputs[1];
      switch (n.op) {
        case Op::kLeaf:
        case Op::kConstant:
          break;
        case Op::kMatmul:
          if (needs(a)) accumulate(a, g * nodes_[b].value.transpose());
          if (needs(b)) accumulate(b, nodes_[a].value.transpose() * g);
          break;
        case Op::kTranspose:
          accumulate(a, g.transpose());
          break;
        case Op::kAdd:
          accumulate(a, g);
          accumulate(b, g);
          break;
        case Op::kSub:
          accumulate(a, g);
          accumulate(b, -g);
          break;
        case Op::kScale:
          accumulate(a, g * n.scalar);
          break;
        case Op::kAddIdentity:
          accumulate(a, g);
          break;
        case Op::kHadamard:
          if (needs(a)) accumulate(a, g.cwiseProduct(nodes_[b].value));
          if (needs(b)) accumulate(b, g.cwiseProduct(nodes_[a].value));
          break;
        case Op::kRelu: {
          const auto& in = nodes_[a].value;
          accumulate(a, (in.array() > 0.0).select(g, 0.0).matrix());
          break;
        }
        case Op::kExp:
          accumulate(a, g.cwiseProduct(n.value));
          break;
        case Op::kScaleBy: {
          const double s = nodes_[b].value(0, 0);
          if (needs(a)) accumulate(a, g * s);
          if (needs(b)) {
            DenseMatrix ds(1, 1);
            ds(0, 0) = g.cwiseProduct(nodes_[a].value).sum();
            accumulate(b, std::move(ds));
          }
          break;
        }
        case Op::kLogSoftmaxRows: {
          // out = u - lse(u), u = z / tau.
          // du = g - softmax(u) * rowsum(g); dz = du / tau; dlog_tau = -<du, u>.
          const double tau = std::exp(nodes_[b].value(0, 0));
          const DenseMatrix probs = n.value.array().exp().matrix();
          const Eigen::VectorXd row_sums = g.rowwise().sum();
          DenseMatrix du = g - (probs.array().colwise() * row_sums.array()).matrix();
          if (needs(b)) {
            DenseMatrix dt(1, 1);
            dt(0, 0) = -du.cwiseProduct(nodes_[a].value).sum() / tau;
            accumulate(b, std::move(dt));
          }
          if (needs(a)) accumulate(a, du / tau);
          break;
        }
        case Op::kSpdSolve: {
          // X = M^{-1} B: dB = M^{-1} G, dM = -dB X^T.
          DenseMatrix db = g;
          cholesky_solve_in_place(n.aux, db);
          if (needs(a)) accumulate(a, -db * n.value.transpose());
          if (needs(b)) accumulate(b, std::move(db));
          break;
        }
        case Op::kSum: {
          const auto& in = nodes_[a].value;
          accumulate(a, DenseMatrix::Constant(in.rows(), in.cols(), g(0, 0)));
          break;
        }
      }
    }

    Gradients out;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      if (nodes_[k].op != Op::kLeaf) continue;
      const auto& v = nodes_[k].value;
      if (live[k] && k <= loss.id) {
        out.grads_.emplace(k, std::move(adj[k]));
      } else {
        out.grads_.emplace(k, DenseMatrix::Zero(v.rows(), v.cols()));
      }
    }
    return out;
  }

  /// Non-recorded row-wise log softmax of logits / tau.
  static DenseMatrix log_softmax_rows_value(const DenseMatrix& logits,
                                            double tau) {
    detail::require(tau > 0.0, "log_softmax_rows: tau must be positive");
    DenseMatrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const auto u = logits.row(r) / tau;
      const double shift = u.maxCoeff();
      const double lse = shift + std::log((u.array() - shift).exp().sum());
      out.row(r) = u.array() - lse;
    }
    return out;
  }

 private:
  struct Node {
    Op op = Op::kConstant;
    std::size_t inputs[2] = {0, 0};
    DenseMatrix value;
    DenseMatrix aux;
    double scalar = 0.0;
    bool requires_grad = false;
  };

  Var push(Op op, std::initializer_list<Var> inputs, DenseMatrix value,
           bool requires_grad = false) {
    Node n;
    n.op = op;
    std::size_t slot = 0;
    for (Var in : inputs) {
      detail::require(in.id < nodes_.size(), "Tape: input from another tape");
      n.inputs[slot++] = in.id;
      requires_grad = requires_grad || nodes_[in.id].requires_grad;
    }
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const Node& node(Var v) const {
    detail::require(v.id < nodes_.size(), "Tape: unknown node");
    return nodes_[v.id];
  }

  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

  void same_shape(Var a, Var b, const char* what) const {
    const auto& va = value(a);
    require_shape(value(b), va.rows(), va.cols(), what);
  }

  void require_scalar(Var v, const char* what) const {
    require_shape(value(v), 1, 1, what);
  }

  std::vector<Node> nodes_;
};

/// Result of comparing reverse-mode gradients with central differences.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  /// Entries whose +h and -h evaluations straddle a relu kink; these are
  /// not compared because the function is not differentiable there.
  std::size_t excluded = 0;
};

/// Builds a scalar loss on `tape` from the differentiable input `x`.
using LossBuilder = std::function<Var(Tape& tape, Var x)>;

/// max over entries of |ad - fd| / max(1, |fd|), with fd the central
/// difference (f(x + h e) - f(x - h e)) / 2h.
inline GradCheckResult grad_check(const LossBuilder& f, const DenseMatrix& x0,
                                  double h) {
  detail::require(h > 0.0, "grad_check: step must be positive");
  Tape tape;
  Var x = tape.leaf(x0);
  Var loss = f(tape, x);
  if (!std::isfinite(tape.scalar_value(loss))) {
    throw NumericalError("grad_check: non-finite evaluation");
  }
  const DenseMatrix ad = tape.backward(loss).at(x);
  const std::uint64_t base_sig = tape.relu_signature();

  auto evaluate = [&](const DenseMatrix& point, std::uint64_t& sig) {
    Tape t;
    Var v = t.leaf(point);
    const double out = t.scalar_value(f(t, v));
    if (!std::isfinite(out)) {
      throw NumericalError("grad_check: non-finite evaluation");
    }
    sig = t.relu_signature();
    return out;
  };

  GradCheckResult result;
  DenseMatrix probe = x0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const double saved = probe.data()[i];
    std::uint64_t sig_plus = 0;
    std::uint64_t sig_minus = 0;
    probe.data()[i] = saved + h;
    const double f_plus = evaluate(probe, sig_plus);
    probe.data()[i] = saved - h;
    const double f_minus = evaluate(probe, sig_minus);
    probe.data()[i] = saved;
    if (sig_plus != base_sig || sig_minus != base_sig) {
      ++result.excluded;
      continue;
    }
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double err = std::abs(ad.data()[i] - fd) / std::max(1.0, std::abs(fd));
    result.max_rel_error = std::max(result.max_rel_error, err);
    ++result.compared;
  }
  return result;
}

}  // namespace opengc
