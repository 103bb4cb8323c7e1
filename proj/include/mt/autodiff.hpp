// Copyright 2026 The Midtrain Lab Authors.
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

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive applied to its variables in execution
// order, so node ids are already a topological order. backward() walks the
// ids from the loss down to zero and calls each node's pullback once.
// Reductions (softmax normalizers, norms, cross-entropy) accumulate in
// double regardless of Scalar; GEMMs accumulate in Scalar.

#ifndef MT_AUTODIFF_HPP
#define MT_AUTODIFF_HPP

#include "mt/tensor.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace mt {

template <typename Scalar>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  using Matrix = RowMatrix<Scalar>;

  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<Scalar>& tensor() const { return tape_->value(id_); }
  const Matrix& value() const { return tensor().values(); }
  const Shape& shape() const { return tensor().shape(); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = RowMatrix<Scalar>;
  using Pullback = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that owns its value.
  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = false) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  /// Leaf that borrows a tensor owned elsewhere (model parameters). The
  /// tensor must outlive the tape and must not change while it is recorded.
  Var<Scalar> param(const Tensor<Scalar>& value, bool requires_grad = true) {
    Node n;
    n.external = &value;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

  /// Records the result of a primitive. The pullback is dropped when no
  /// input requires a gradient.
  Var<Scalar> record(Tensor<Scalar> value, bool requires_grad, Pullback pullback) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.pullback = std::move(pullback);
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  const Tensor<Scalar>& value(std::size_t id) const { return nodes_.at(id).value(); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `g` into the gradient of node `id` (fan-out sums).
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a scalar loss. May be called once per tape.
  void backward(Var<Scalar> loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    const Node& ln = nodes_.at(loss.id());
    if (ln.value().size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " + to_string(ln.value().shape()));
    }
    if (!ln.requires_grad) return;
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.pullback && n.grad.size() != 0) {
        n.pullback(*this, n.grad);
      }
    }
  }

  bool has_grad(Var<Scalar> v) const { return nodes_.at(v.id()).grad.size() != 0; }
  /// Raw gradient; only valid when has_grad(v).
  const Matrix& grad_matrix(Var<Scalar> v) const { return nodes_.at(v.id()).grad; }

  /// Gradient of the last backward() with respect to `v`; zeros when the
  /// loss does not depend on it.
  Tensor<Scalar> grad(Var<Scalar> v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.size() == 0) return Tensor<Scalar>(n.value().shape());
    return Tensor<Scalar>(n.value().shape(), n.grad);
  }

 private:
  struct Node {
    Tensor<Scalar> owned;
    const Tensor<Scalar>* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Pullback pullback;
    const Tensor<Scalar>& value() const { return external ? *external : owned; }
  };

  std::deque<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void require_same_tape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
}

template <typename Scalar>
[[noreturn]] void shape_error(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                       to_string(b.shape()));
}

}  // namespace detail

/// a[m×k] · b[k×n].
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
  auto& tape = a.tape();
  RowMatrix<Scalar> out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(Tensor<Scalar>::from_matrix(std::move(out)), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).values().transpose());
                       if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).values().transpose() * g);
                     });
}

/// a[m×k] · b[n×k]ᵀ, used for attention scores and the tied output layer.
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "matmul_nt");
  if (a.cols() != b.cols()) detail::shape_error("matmul_nt", a, b);
  auto& tape = a.tape();
  RowMatrix<Scalar> out = a.value() * b.value().transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(Tensor<Scalar>::from_matrix(std::move(out)), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).values());
                       if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia).values());
                     });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "add");
  if (a.shape() != b.shape()) detail::shape_error("add", a, b);
  auto& tape = a.tape();
  RowMatrix<Scalar> out = a.value() + b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(Tensor<Scalar>(a.shape(), std::move(out)), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       t.accumulate(ia, g);
                       t.accumulate(ib, g);
                     });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b, "mul");
  if (a.shape() != b.shape()) detail::shape_error("mul", a, b);
  auto& tape = a.tape();
  RowMatrix<Scalar> out = a.value().cwiseProduct(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(Tensor<Scalar>(a.shape(), std::move(out)), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib).values()));
                       if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia).values()));
                     });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar factor) {
  auto& tape = a.tape();
  RowMatrix<Scalar> out = a.value() * factor;
  const std::size_t ia = a.id();
  return tape.record(Tensor<Scalar>(a.shape(), std::move(out)), a.requires_grad(),
                     [ia, factor](Tape<Scalar>& t, const RowMatrix<Scalar>& g) { t.accumulate(ia, g * factor); });
}

/// Adds a row vector (shape {n} or {1,n}) to every row of a[m×n]. The only
/// broadcast the engine supports.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> bias) {
  detail::require_same_tape(a, bias, "add_row");
  if (bias.rows() != 1 || bias.cols() != a.cols()) detail::shape_error("add_row", a, bias);
  auto& tape = a.tape();
  RowMatrix<Scalar> out = a.value().rowwise() + bias.value().row(0);
  const std::size_t ia = a.id(), ib = bias.id();
  return tape.record(Tensor<Scalar>(a.shape(), std::move(out)), a.requires_grad() || bias.requires_grad(),
                     [ia, ib](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       t.accumulate(ia, g);
                       if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                     });
}

/// Tanh-approximated GELU.
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  auto& tape = a.tape();
  const auto& x = a.value();
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = static_cast<Scalar>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
  }
  const std::size_t ia = a.id();
  return tape.record(Tensor<Scalar>(a.shape(), std::move(out)), a.requires_grad(),
                     [ia](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       const auto& xv = t.value(ia).values();
                       RowMatrix<Scalar> d(xv.rows(), xv.cols());
                       for (Index i = 0; i < xv.size(); ++i) {
                         const double v = xv.data()[i];
                         const double th = std::tanh(kC * (v + kA * v * v * v));
                         const double dv = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * v * v);
                         d.data()[i] = static_cast<Scalar>(dv * g.data()[i]);
                       }
                       t.accumulate(ia, d);
                     });
}

/// Root-mean-square normalization of each row, scaled by `gain` ({n}).
/// y = x / sqrt(mean(x²) + eps) ⊙ gain, with no centering and no bias.
template <typename Scalar>
Var<Scalar> rms_norm(Var<Scalar> x, Var<Scalar> gain, double eps = 1e-6) {
  detail::require_same_tape(x, gain, "rms_norm");
  if (gain.rows() != 1 || gain.cols() != x.cols()) detail::shape_error("rms_norm", x, gain);
  auto& tape = x.tape();
  const auto& xv = x.value();
  const Index n = xv.cols();
  std::vector<double> inv_rms(static_cast<std::size_t>(xv.rows()));
  RowMatrix<Scalar> out(xv.rows(), n);
  for (Index r = 0; r < xv.rows(); ++r) {
    double ss = 0.0;
    for (Index c = 0; c < n; ++c) ss += double(xv(r, c)) * double(xv(r, c));
    const double ir = 1.0 / std::sqrt(ss / double(n) + eps);
    inv_rms[static_cast<std::size_t>(r)] = ir;
    for (Index c = 0; c < n; ++c) out(r, c) = static_cast<Scalar>(double(xv(r, c)) * ir * double(gain.value()(0, c)));
  }
  const std::size_t ix = x.id(), ig = gain.id();
  return tape.record(
      Tensor<Scalar>(x.shape(), std::move(out)), x.requires_grad() || gain.requires_grad(),
      [ix, ig, inv_rms = std::move(inv_rms)](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
        const auto& xv = t.value(ix).values();
        const auto& gv = t.value(ig).values();
        const Index n = xv.cols();
        RowMatrix<Scalar> dx(xv.rows(), n);
        RowMatrix<Scalar> dg = RowMatrix<Scalar>::Zero(1, n);
        for (Index r = 0; r < xv.rows(); ++r) {
          const double ir = inv_rms[static_cast<std::size_t>(r)];
          double dot = 0.0;  // sum_j gain_j * g_j * x_j
          for (Index c = 0; c < n; ++c) {
            dot += double(gv(0, c)) * double(g(r, c)) * double(xv(r, c));
            dg(0, c) += static_cast<Scalar>(double(g(r, c)) * double(xv(r, c)) * ir);
          }
          const double k = dot * ir * ir * ir / double(n);
          for (Index c = 0; c < n; ++c) {
            dx(r, c) = static_cast<Scalar>(double(gv(0, c)) * double(g(r, c)) * ir - double(xv(r, c)) * k);
          }
        }
        t.accumulate(ix, dx);
        t.accumulate(ig, dg);
      });
}

/// Row-wise softmax. Entries equal to -inf (masked) receive probability 0.
template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> a) {
  auto& tape = a.tape();
  const auto& x = a.value();
  RowMatrix<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mx = double(x.row(r).maxCoeff());
    double s = 0.0;
    for (Index c = 0; c < x.cols(); ++c) s += std::exp(double(x(r, c)) - mx);
    for (Index c = 0; c < x.cols(); ++c) y(r, c) = static_cast<Scalar>(std::exp(double(x(r, c)) - mx) / s);
  }
  const std::size_t ia = a.id();
  RowMatrix<Scalar> saved = a.requires_grad() ? y : RowMatrix<Scalar>();
  return tape.record(Tensor<Scalar>(a.shape(), std::move(y)), a.requires_grad(),
                     [ia, yv = std::move(saved)](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       RowMatrix<Scalar> d(yv.rows(), yv.cols());
                       for (Index r = 0; r < yv.rows(); ++r) {
                         double dot = 0.0;
                         for (Index c = 0; c < yv.cols(); ++c) dot += double(g(r, c)) * double(yv(r, c));
                         for (Index c = 0; c < yv.cols(); ++c) {
                           d(r, c) = static_cast<Scalar>(double(yv(r, c)) * (double(g(r, c)) - dot));
                         }
                       }
                       t.accumulate(ia, d);
                     });
}

/// Rows of `table` ({V,d}) selected by `ids`; result {|ids|, d}.
template <typename Scalar>
Var<Scalar> embedding(Var<Scalar> table, std::span<const TokenId> ids) {
  if (ids.empty()) throw ContractError("embedding: empty id sequence");
  auto& tape = table.tape();
  const auto& tv = table.value();
  RowMatrix<Scalar> out(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                          std::to_string(tv.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = tv.row(ids[i]);
  }
  const std::size_t it = table.id();
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return tape.record(Tensor<Scalar>::from_matrix(std::move(out)), table.requires_grad(),
                     [it, saved = std::move(saved)](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       const auto& tv = t.value(it).values();
                       RowMatrix<Scalar> d = RowMatrix<Scalar>::Zero(tv.rows(), tv.cols());
                       for (std::size_t i = 0; i < saved.size(); ++i) d.row(saved[i]) += g.row(static_cast<Index>(i));
                       t.accumulate(it, d);
                     });
}

/// out(i,j) = table(buckets(i,j), column). Used for relative position
/// biases, where `table` is {buckets, heads}.
template <typename Scalar>
Var<Scalar> gather_bias(Var<Scalar> table, const Eigen::MatrixXi& buckets, Index column) {
  auto& tape = table.tape();
  const auto& tv = table.value();
  if (column < 0 || column >= tv.cols()) throw DimensionError("gather_bias: column out of range");
  RowMatrix<Scalar> out(buckets.rows(), buckets.cols());
  for (Index i = 0; i < buckets.rows(); ++i)
    for (Index j = 0; j < buckets.cols(); ++j) out(i, j) = tv(buckets(i, j), column);
  const std::size_t it = table.id();
  return tape.record(Tensor<Scalar>::from_matrix(std::move(out)), table.requires_grad(),
                     [it, buckets, column](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       const auto& tv = t.value(it).values();
                       RowMatrix<Scalar> d = RowMatrix<Scalar>::Zero(tv.rows(), tv.cols());
                       for (Index i = 0; i < buckets.rows(); ++i)
                         for (Index j = 0; j < buckets.cols(); ++j) d(buckets(i, j), column) += g(i, j);
                       t.accumulate(it, d);
                     });
}

/// Columns [start, start+width) of a rank-2 value.
template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Index start, Index width) {
  if (start < 0 || width <= 0 || start + width > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + "," + std::to_string(start + width) +
                         ") outside " + to_string(a.shape()));
  }
  auto& tape = a.tape();
  RowMatrix<Scalar> out = a.value().middleCols(start, width);
  const std::size_t ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return tape.record(Tensor<Scalar>::from_matrix(std::move(out)), a.requires_grad(),
                     [ia, start, width, rows, cols](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       RowMatrix<Scalar> d = RowMatrix<Scalar>::Zero(rows, cols);
                       d.middleCols(start, width) = g;
                       t.accumulate(ia, d);
                     });
}

/// Rows [start, start+count) of a rank-2 value.
template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count <= 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + "," + std::to_string(start + count) +
                         ") outside " + to_string(a.shape()));
  }
  auto& tape = a.tape();
  RowMatrix<Scalar> out = a.value().middleRows(start, count);
  const std::size_t ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return tape.record(Tensor<Scalar>::from_matrix(std::move(out)), a.requires_grad(),
                     [ia, start, count, rows, cols](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       RowMatrix<Scalar> d = RowMatrix<Scalar>::Zero(rows, cols);
                       d.middleRows(start, count) = g;
                       t.accumulate(ia, d);
                     });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  auto& tape = parts.front().tape();
  const Index rows = parts.front().rows();
  Index total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) detail::shape_error("concat_cols", parts.front(), p);
    total += p.cols();
    needs = needs || p.requires_grad();
  }
  RowMatrix<Scalar> out(rows, total);
  std::vector<std::pair<std::size_t, Index>> spans;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    at += p.cols();
  }
  return tape.record(Tensor<Scalar>::from_matrix(std::move(out)), needs,
                     [spans = std::move(spans)](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       Index at = 0;
                       for (const auto& [id, w] : spans) {
                         if (t.requires_grad(id)) t.accumulate(id, g.middleCols(at, w));
                         at += w;
                       }
                     });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  auto& tape = a.tape();
  double s = 0.0;
  for (Index i = 0; i < a.value().size(); ++i) s += double(a.value().data()[i]);
  const std::size_t ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return tape.record(Tensor<Scalar>::scalar(static_cast<Scalar>(s)), a.requires_grad(),
                     [ia, rows, cols](Tape<Scalar>& t, const RowMatrix<Scalar>& g) {
                       t.accumulate(ia, RowMatrix<Scalar>::Constant(rows, cols, g(0, 0)));
                     });
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits` ({T,V}), skipping positions whose target equals `ignore_id`.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const TokenId> targets, TokenId ignore_id) {
  const auto& x = logits.value();
  if (static_cast<Index>(targets.size()) != x.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         to_string(logits.shape()));
  }
  std::vector<double> lse(targets.size(), 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const TokenId y = targets[r];
    if (y == ignore_id) continue;
    if (y < 0 || y >= x.cols()) {
      throw ContractError("cross_entropy: target " + std::to_string(y) + " outside vocabulary of " +
                          std::to_string(x.cols()));
    }
    const Index row = static_cast<Index>(r);
    const double mx = double(x.row(row).maxCoeff());
    double s = 0.0;
    for (Index c = 0; c < x.cols(); ++c) s += std::exp(double(x(row, c)) - mx);
    lse[r] = mx + std::log(s);
    total += lse[r] - double(x(row, y));
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy: every position is ignored");
  auto& tape = logits.tape();
  const std::size_t il = logits.id();
  std::vector<TokenId> saved(targets.begin(), targets.end());
  const double inv_n = 1.0 / double(counted);
  return tape.record(
      Tensor<Scalar>::scalar(static_cast<Scalar>(total * inv_n)), logits.requires_grad(),
      [il, saved = std::move(saved), lse = std::move(lse), ignore_id, inv_n](Tape<Scalar>& t,
                                                                            const RowMatrix<Scalar>& g) {
        const auto& xv = t.value(il).values();
        RowMatrix<Scalar> d = RowMatrix<Scalar>::Zero(xv.rows(), xv.cols());
        const double scale = double(g(0, 0)) * inv_n;
        for (std::size_t r = 0; r < saved.size(); ++r) {
          if (saved[r] == ignore_id) continue;
          const Index row = static_cast<Index>(r);
          for (Index c = 0; c < xv.cols(); ++c) d(row, c) = static_cast<Scalar>(std::exp(double(xv(row, c)) - lse[r]) * scale);
          d(row, saved[r]) -= static_cast<Scalar>(scale);
        }
        t.accumulate(il, d);
      });
}

}  // namespace mt

#endif  // MT_AUTODIFF_HPP
