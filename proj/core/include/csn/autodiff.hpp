// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward pass. Each node keeps its
// value, a lazily allocated gradient and a backward closure that pushes the
// node's gradient into its parents. Parameters are leaves that flush their
// gradient into Parameter::grad when the backward sweep reaches them, so
// several tapes (one per candidate set of a mini-batch) accumulate into the
// same parameter buffers.
//
// Everything is templated on the scalar so the model trains in float and is
// gradient-checked in double.

#ifndef CSN_AUTODIFF_HPP
#define CSN_AUTODIFF_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace csn {

using Index = Eigen::Index;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool weight_decay = true;

  Parameter() = default;
  Parameter(std::string n, Index rows, Index cols, bool decay = true)
      : name(std::move(n)),
        value(Matrix<T>::Zero(rows, cols)),
        grad(Matrix<T>::Zero(rows, cols)),
        weight_decay(decay) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

namespace ad {

template <typename T>
class Tape;

/// Handle to a tape node. Cheap to copy; only valid while its tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }
  int id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix<T>&)>;

  /// With grad_enabled false nothing is retained for a backward sweep.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Var<T> parameter(Parameter<T>& p) {
    nodes_.push_back(Node{p.value, {}, grad_enabled_, &p, {}});
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  /// Records an op node. The closure is dropped when no parent needs a
  /// gradient.
  Var<T> record(Matrix<T> value, std::initializer_list<Var<T>> parents, Backward backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p.id());
    return record(std::move(value), needs, std::move(backward));
  }

  Var<T> record(Matrix<T> value, const std::vector<Var<T>>& parents, Backward backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p.id());
    return record(std::move(value), needs, std::move(backward));
  }

  Var<T> record(Matrix<T> value, bool needs_grad, Backward backward) {
    needs_grad = needs_grad && grad_enabled_;
    nodes_.push_back(
        Node{std::move(value), {}, needs_grad, nullptr, needs_grad ? std::move(backward) : Backward{}});
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Matrix<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Gradient buffer of a node, zero-initialised on first access.
  Matrix<T>& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds `g` into the gradient of `v` when it participates in backprop.
  template <typename Expr>
  void accumulate(const Var<T>& v, const Expr& g) {
    if (!requires_grad(v.id())) return;
    grad(v.id()) += g;
  }

  bool wants(const Var<T>& v) const { return requires_grad(v.id()); }

  /// Reverse sweep from a scalar root, seeded with d(root)/d(root) = 1.
  void backward(const Var<T>& root, T seed = T(1)) {
    if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward: root must be 1x1");
    if (!requires_grad(root.id())) return;
    grad(root.id())(0, 0) += seed;
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.param != nullptr) {
        n.param->grad += n.grad;
      } else if (n.backward) {
        n.backward(*this, n.grad);
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    Backward backward;
  };
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

// ---------------------------------------------------------------------------
// Elementary operations
// ---------------------------------------------------------------------------

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.wants(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.wants(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

/// a * b^T
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: widths differ");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value() * b.value().transpose();
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.wants(a)) tp.accumulate(a, g * b.value());
    if (tp.wants(b)) tp.accumulate(b, g.transpose() * a.value());
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value() + b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

/// Adds a 1 x c row to every row of a.
template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias shape mismatch");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g);
    if (tp.wants(row)) tp.accumulate(row, g.colwise().sum());
  });
}

template <typename T>
Var<T> cwise_mul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "cwise_mul: shape mismatch");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.wants(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (tp.wants(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

/// Elementwise product with a constant matrix (masks, decay factors).
template <typename T>
Var<T> mul_const(const Var<T>& a, const Matrix<T>& c) {
  detail::require(a.rows() == c.rows() && a.cols() == c.cols(), "mul_const: shape mismatch");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().cwiseProduct(c);
  return t.record(std::move(out), {a}, [a, c](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g.cwiseProduct(c));
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value() * s;
  return t.record(std::move(out), {a}, [a, s](Tape<T>& tp, const Matrix<T>& g) { tp.accumulate(a, g * s); });
}

/// Multiplies every entry of a by the 1x1 variable s.
template <typename T>
Var<T> scalar_mul(const Var<T>& a, const Var<T>& s) {
  detail::require(s.rows() == 1 && s.cols() == 1, "scalar_mul: s must be 1x1");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value() * s.scalar();
  return t.record(std::move(out), {a, s}, [a, s](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.wants(a)) tp.accumulate(a, g * s.scalar());
    if (tp.wants(s)) {
      Matrix<T> ds(1, 1);
      ds(0, 0) = g.cwiseProduct(a.value()).sum();
      tp.accumulate(s, ds);
    }
  });
}

/// Scales row r of a by w(r, 0), w is rows x 1.
template <typename T>
Var<T> row_scale(const Var<T>& a, const Var<T>& w) {
  detail::require(w.cols() == 1 && w.rows() == a.rows(), "row_scale: weight must be rows x 1");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().array().colwise() * w.value().col(0).array();
  return t.record(std::move(out), {a, w}, [a, w](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.wants(a)) tp.accumulate(a, (g.array().colwise() * w.value().col(0).array()).matrix());
    if (tp.wants(w)) tp.accumulate(w, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [a, self](Tape<T>& tp, const Matrix<T>& g) {
    const Matrix<T>& y = tp.value(self);
    tp.accumulate(a, g.cwiseProduct(y.cwiseProduct((T(1) - y.array()).matrix())));
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().array().tanh().matrix();
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [a, self](Tape<T>& tp, const Matrix<T>& g) {
    const Matrix<T>& y = tp.value(self);
    tp.accumulate(a, (g.array() * (T(1) - y.array().square())).matrix());
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().cwiseMax(T(0));
  return t.record(std::move(out), {a}, [a](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, g.cwiseProduct((a.value().array() > T(0)).template cast<T>().matrix()));
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Tape<T>& t = *a.tape();
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, Matrix<T>::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  Tape<T>& t = *parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<T> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape<T>& tp, const Matrix<T>& g) {
    Index off = 0;
    for (const auto& p : parts) {
      if (tp.wants(p)) tp.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  Tape<T>& t = *parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix<T> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return t.record(std::move(out), parts, [parts](Tape<T>& tp, const Matrix<T>& g) {
    Index off = 0;
    for (const auto& p : parts) {
      if (tp.wants(p)) tp.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, Index start, Index count) {
  detail::require(start >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().middleRows(start, count);
  return t.record(std::move(out), {a}, [a, start, count](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.wants(a)) tp.grad(a.id()).middleRows(start, count) += g;
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, Index start, Index count) {
  detail::require(start >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value().middleCols(start, count);
  return t.record(std::move(out), {a}, [a, start, count](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.wants(a)) tp.grad(a.id()).middleCols(start, count) += g;
  });
}

/// Row-major reinterpretation of the same entries.
template <typename T>
Var<T> reshape(const Var<T>& a, Index rows, Index cols) {
  detail::require(rows * cols == a.value().size(), "reshape: size mismatch");
  Tape<T>& t = *a.tape();
  Matrix<T> out = Eigen::Map<const Matrix<T>>(a.value().data(), rows, cols);
  return t.record(std::move(out), {a}, [a](Tape<T>& tp, const Matrix<T>& g) {
    tp.accumulate(a, Eigen::Map<const Matrix<T>>(g.data(), a.rows(), a.cols()));
  });
}

/// Zeroes rows at positions >= length.
template <typename T>
Var<T> mask_rows(const Var<T>& a, Index length) {
  Tape<T>& t = *a.tape();
  Matrix<T> out = a.value();
  if (length < out.rows()) out.bottomRows(out.rows() - length).setZero();
  return t.record(std::move(out), {a}, [a, length](Tape<T>& tp, const Matrix<T>& g) {
    if (!tp.wants(a)) return;
    const Index keep = std::min<Index>(length, g.rows());
    tp.grad(a.id()).topRows(keep) += g.topRows(keep);
  });
}

/// Mean of the first `length` rows, 1 x cols. Zero when length is 0.
template <typename T>
Var<T> masked_mean_rows(const Var<T>& a, Index length) {
  Tape<T>& t = *a.tape();
  const Index len = std::min<Index>(length, a.rows());
  Matrix<T> out = Matrix<T>::Zero(1, a.cols());
  if (len > 0) {
    for (Index r = 0; r < len; ++r) out.row(0) += a.value().row(r);
    out /= static_cast<T>(len);
  }
  return t.record(std::move(out), {a}, [a, len](Tape<T>& tp, const Matrix<T>& g) {
    if (len == 0 || !tp.wants(a)) return;
    Matrix<T>& ga = tp.grad(a.id());
    const T inv = T(1) / static_cast<T>(len);
    for (Index r = 0; r < len; ++r) ga.row(r) += g.row(0) * inv;
  });
}

/// Pairwise cosine similarity between rows of a and rows of b. A pair that
/// involves a zero row has similarity 0 and passes no gradient.
template <typename T>
Var<T> cosine_pairs(const Var<T>& a, const Var<T>& b) {
  detail::require(a.cols() == b.cols(), "cosine_pairs: widths differ");
  Tape<T>& t = *a.tape();
  const Matrix<T>& A = a.value();
  const Matrix<T>& B = b.value();
  Eigen::Matrix<T, Eigen::Dynamic, 1> na = A.rowwise().norm();
  Eigen::Matrix<T, Eigen::Dynamic, 1> nb = B.rowwise().norm();
  Eigen::Matrix<T, Eigen::Dynamic, 1> ia = na.unaryExpr([](T x) { return x > T(0) ? T(1) / x : T(0); });
  Eigen::Matrix<T, Eigen::Dynamic, 1> ib = nb.unaryExpr([](T x) { return x > T(0) ? T(1) / x : T(0); });
  Matrix<T> dots = A * B.transpose();
  Matrix<T> out = ia.asDiagonal() * dots * ib.asDiagonal();
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {a, b}, [a, b, ia, ib, self](Tape<T>& tp, const Matrix<T>& g) {
    const Matrix<T>& C = tp.value(self);
    const Matrix<T>& A = a.value();
    const Matrix<T>& B = b.value();
    // d cos(x,y)/dx = y/(|x||y|) - cos * x/|x|^2
    if (tp.wants(a)) {
      Matrix<T> Gs = ia.asDiagonal() * g * ib.asDiagonal();
      Eigen::Matrix<T, Eigen::Dynamic, 1> gc = g.cwiseProduct(C).rowwise().sum();
      Matrix<T> da = Gs * B;
      da -= (gc.cwiseProduct(ia).cwiseProduct(ia)).asDiagonal() * A;
      tp.accumulate(a, da);
    }
    if (tp.wants(b)) {
      Matrix<T> Gs = ia.asDiagonal() * g * ib.asDiagonal();
      Eigen::Matrix<T, Eigen::Dynamic, 1> gc = g.cwiseProduct(C).colwise().sum().transpose();
      Matrix<T> db = Gs.transpose() * A;
      db -= (gc.cwiseProduct(ib).cwiseProduct(ib)).asDiagonal() * B;
      tp.accumulate(b, db);
    }
  });
}

/// Row softmax restricted to the first `key_length` columns; remaining
/// columns are 0. With key_length 0 the whole output is 0.
template <typename T>
Var<T> masked_softmax_rows(const Var<T>& logits, Index key_length) {
  Tape<T>& t = *logits.tape();
  const Matrix<T>& z = logits.value();
  const Index len = std::min<Index>(key_length, z.cols());
  Matrix<T> out = Matrix<T>::Zero(z.rows(), z.cols());
  if (len > 0) {
    for (Index r = 0; r < z.rows(); ++r) {
      const T mx = z.row(r).head(len).maxCoeff();
      T total = T(0);
      for (Index c = 0; c < len; ++c) {
        out(r, c) = std::exp(z(r, c) - mx);
        total += out(r, c);
      }
      out.row(r).head(len) /= total;
    }
  }
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {logits}, [logits, self](Tape<T>& tp, const Matrix<T>& g) {
    const Matrix<T>& p = tp.value(self);
    Eigen::Matrix<T, Eigen::Dynamic, 1> inner = g.cwiseProduct(p).rowwise().sum();
    Matrix<T> dz = p.cwiseProduct((g.colwise() - inner));
    tp.accumulate(logits, dz);
  });
}

/// For every row r < row_length: max over the first col_length columns.
/// Rows beyond row_length, and all rows when col_length is 0, give 0.
/// Output is rows x 1.
template <typename T>
Var<T> masked_row_max(const Var<T>& a, Index row_length, Index col_length) {
  Tape<T>& t = *a.tape();
  const Matrix<T>& v = a.value();
  const Index rl = std::min<Index>(row_length, v.rows());
  const Index cl = std::min<Index>(col_length, v.cols());
  Matrix<T> out = Matrix<T>::Zero(v.rows(), 1);
  std::vector<Index> arg(static_cast<std::size_t>(v.rows()), -1);
  if (cl > 0) {
    for (Index r = 0; r < rl; ++r) {
      Index best = 0;
      for (Index c = 1; c < cl; ++c)
        if (v(r, c) > v(r, best)) best = c;
      out(r, 0) = v(r, best);
      arg[static_cast<std::size_t>(r)] = best;
    }
  }
  return t.record(std::move(out), {a}, [a, arg](Tape<T>& tp, const Matrix<T>& g) {
    if (!tp.wants(a)) return;
    Matrix<T>& ga = tp.grad(a.id());
    for (std::size_t r = 0; r < arg.size(); ++r)
      if (arg[r] >= 0) ga(static_cast<Index>(r), arg[r]) += g(static_cast<Index>(r), 0);
  });
}

/// Binary cross-entropy on a logit: -[y log s(z) + (1-y) log(1-s(z))].
template <typename T>
Var<T> bce_with_logit(const Var<T>& z, T label) {
  detail::require(z.rows() == 1 && z.cols() == 1, "bce_with_logit: logit must be 1x1");
  Tape<T>& t = *z.tape();
  const T x = z.scalar();
  // softplus(x) - y*x, evaluated stably
  const T sp = x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  Matrix<T> out(1, 1);
  out(0, 0) = sp - label * x;
  return t.record(std::move(out), {z}, [z, label](Tape<T>& tp, const Matrix<T>& g) {
    const T s = T(1) / (T(1) + std::exp(-z.scalar()));
    Matrix<T> dz(1, 1);
    dz(0, 0) = g(0, 0) * (s - label);
    tp.accumulate(z, dz);
  });
}

}  // namespace ad
}  // namespace csn

#endif  // CSN_AUTODIFF_HPP
