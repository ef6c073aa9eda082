#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward pass. Rows index tokens or
// records, columns index features. Parameters enter as zero-copy leaves; their
// gradients land in a GradBuffer when backward() runs. A tape constructed
// without a GradBuffer records no backward closures and is used for inference.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "mobllm/error.hpp"
#include "mobllm/parameters.hpp"

namespace mobllm::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad, const Matrix& out)>;

  explicit Tape(GradBuffer* sink = nullptr) : sink_(sink) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return sink_ != nullptr; }
  GradBuffer* sink() const { return sink_; }

  Var constant(Matrix value) {
    Node& n = nodes_.emplace_back();
    n.own = std::move(value);
    n.value = &n.own;
    return Var(this, static_cast<int>(nodes_.size() - 1));
  }

  // Leaf for a parameter. Repeated calls within one tape share the node.
  Var param(const Parameter& p) {
    if (auto it = param_nodes_.find(p.id); it != param_nodes_.end()) return Var(this, it->second);
    Node& n = nodes_.emplace_back();
    n.value = &p.value;
    n.param = &p;
    n.requires_grad = recording() && p.trainable;
    const int id = static_cast<int>(nodes_.size() - 1);
    param_nodes_.emplace(p.id, id);
    return Var(this, id);
  }

  Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) needs = needs || requires_grad(v);
    return push_impl(std::move(value), needs, std::move(backward));
  }

  Var push(Matrix value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) needs = needs || requires_grad(v);
    return push_impl(std::move(value), needs, std::move(backward));
  }

  // Node with a custom requires-grad decision (used by gather_rows).
  Var push_impl(Matrix value, bool needs, Backward backward) {
    Node& n = nodes_.emplace_back();
    n.own = std::move(value);
    n.value = &n.own;
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    return Var(this, static_cast<int>(nodes_.size() - 1));
  }

  const Matrix& value(const Var& v) const { return *nodes_[static_cast<std::size_t>(v.id())].value; }
  bool requires_grad(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }

  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  // Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
  void backward(const Var& root) {
    if (!recording()) throw ArgumentError("backward() on a tape without a gradient buffer");
    if (root.rows() != 1 || root.cols() != 1) throw ArgumentError("backward() requires a scalar root");
    Node& r = nodes_[static_cast<std::size_t>(root.id())];
    if (!r.requires_grad) return;
    r.grad = Matrix::Ones(1, 1);
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.param != nullptr) {
        sink_->at(*n.param) += n.grad;
      } else if (n.backward) {
        n.backward(*this, n.grad, *n.value);
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own;
    const Matrix* value = nullptr;
    Matrix grad;
    bool requires_grad = false;
    const Parameter* param = nullptr;
    Backward backward;
  };

  std::deque<Node> nodes_;
  GradBuffer* sink_ = nullptr;
  std::unordered_map<std::size_t, int> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// ---------------------------------------------------------------------------
// Linear algebra and shape ops

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ConfigError("matmul: inner dimension mismatch");
  return a.tape().push(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

inline Var transpose(const Var& a) {
  return a.tape().push(a.value().transpose(), {a},
                       [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g.transpose()); });
}

inline Var add(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("add: shape mismatch");
  return a.tape().push(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("sub: shape mismatch");
  return a.tape().push(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

// a (r x c) + row (1 x c) broadcast over rows.
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ConfigError("add_row: shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

// a (r x c) .* row (1 x c) broadcast over rows.
inline Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ConfigError("mul_row: shape mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape().push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, (g.array().rowwise() * row.value().row(0).array()).matrix());
    if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
  });
}

inline Var mul(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("mul: shape mismatch");
  return a.tape().push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

inline Var scale(const Var& a, double factor) {
  return a.tape().push(a.value() * factor, {a},
                       [a, factor](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g * factor); });
}

inline Var add_scalar(const Var& a, double c) {
  return a.tape().push((a.value().array() + c).matrix(), {a},
                       [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}

inline Var affine(const Var& x, const Var& weight, const Var& bias) { return add_row(matmul(x, weight), bias); }

inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ConfigError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().push(std::move(out), std::span<const Var>(inputs),
                                   [inputs](Tape& t, const Matrix& g, const Matrix&) {
                                     Eigen::Index off = 0;
                                     for (const Var& p : inputs) {
                                       const Eigen::Index r = p.rows();
                                       t.accumulate(p, g.middleRows(off, r));
                                       off += r;
                                     }
                                   });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ConfigError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().push(std::move(out), std::span<const Var>(inputs),
                                   [inputs](Tape& t, const Matrix& g, const Matrix&) {
                                     Eigen::Index off = 0;
                                     for (const Var& p : inputs) {
                                       const Eigen::Index c = p.cols();
                                       t.accumulate(p, g.middleCols(off, c));
                                       off += c;
                                     }
                                   });
}

inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ArgumentError("slice_rows: out of range");
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return a.tape().push(a.value().middleRows(start, count), {a},
                       [a, start, count, rows, cols](Tape& t, const Matrix& g, const Matrix&) {
                         Matrix full = Matrix::Zero(rows, cols);
                         full.middleRows(start, count) = g;
                         t.accumulate(a, full);
                       });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ArgumentError("slice_cols: out of range");
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return a.tape().push(a.value().middleCols(start, count), {a},
                       [a, start, count, rows, cols](Tape& t, const Matrix& g, const Matrix&) {
                         Matrix full = Matrix::Zero(rows, cols);
                         full.middleCols(start, count) = g;
                         t.accumulate(a, full);
                       });
}

// Rows of an embedding table. Gradients scatter straight into the gradient
// buffer, so large tables never materialise a dense per-sample gradient.
inline Var gather_rows(Tape& tape, const Parameter& table, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), table.value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= table.value.rows())
      throw LookupError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + table.name);
    out.row(static_cast<Eigen::Index>(i)) = table.value.row(rows[i]);
  }
  const bool needs = tape.recording() && table.trainable;
  std::vector<int> idx(rows.begin(), rows.end());
  const Parameter* p = &table;
  return tape.push_impl(std::move(out), needs, [p, idx](Tape& t, const Matrix& g, const Matrix&) {
    Matrix& dst = t.sink()->at(*p);
    for (std::size_t i = 0; i < idx.size(); ++i) dst.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

inline Var gather_rows(Tape& tape, const Parameter& table, std::initializer_list<int> rows) {
  return gather_rows(tape, table, std::span<const int>(rows.begin(), rows.size()));
}

// Rows of an intermediate value, with repeats allowed.
inline Var select_rows(const Var& a, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw LookupError("select_rows: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return a.tape().push(std::move(out), {a}, [a, idx](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, full);
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline Var sigmoid(const Var& a) {
  return a.tape().push(a.value().unaryExpr([](double x) { return sigmoid_scalar(x); }), {a},
                       [a](Tape& t, const Matrix& g, const Matrix& y) {
                         t.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
                       });
}

inline Var tanh(const Var& a) {
  return a.tape().push(a.value().array().tanh().matrix(), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

inline Var relu(const Var& a) {
  return a.tape().push(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (g.array() * (a.value().array() > 0.0).cast<double>()).matrix());
  });
}

inline Var exp(const Var& a) {
  return a.tape().push(a.value().array().exp().matrix(), {a},
                       [a](Tape& t, const Matrix& g, const Matrix& y) { t.accumulate(a, g.cwiseProduct(y)); });
}

inline Var log(const Var& a) {
  return a.tape().push(a.value().array().log().matrix(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (g.array() / a.value().array()).matrix());
  });
}

inline Var softplus(const Var& a) {
  return a.tape().push(a.value().unaryExpr([](double x) { return softplus_scalar(x); }), {a},
                       [a](Tape& t, const Matrix& g, const Matrix&) {
                         t.accumulate(a, g.cwiseProduct(a.value().unaryExpr([](double x) { return sigmoid_scalar(x); })));
                       });
}

inline Var square(const Var& a) {
  return a.tape().push(a.value().array().square().matrix(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (2.0 * g.array() * a.value().array()).matrix());
  });
}

// Subgradient 0 at the kink.
inline Var abs(const Var& a) {
  return a.tape().push(a.value().cwiseAbs(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (g.array() * a.value().array().sign()).matrix());
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalisations (all row-wise)

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

inline Var softmax_rows(const Var& a) {
  return a.tape().push(softmax_rows_value(a.value()), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    const Eigen::VectorXd inner = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(a, y.cwiseProduct(g - inner.replicate(1, g.cols())));
  });
}

// Softmax with entries above the diagonal excluded: row i sees columns 0..i.
inline Var causal_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index width = std::min<Eigen::Index>(i + 1, x.cols());
    const double m = x.row(i).head(width).maxCoeff();
    y.row(i).head(width) = (x.row(i).head(width).array() - m).exp().matrix();
    y.row(i).head(width) /= y.row(i).head(width).sum();
  }
  return a.tape().push(std::move(y), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    const Eigen::VectorXd inner = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(a, y.cwiseProduct(g - inner.replicate(1, g.cols())));
  });
}

inline Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = (x.row(i).array() - lse).matrix();
  }
  return a.tape().push(std::move(y), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    const Matrix p = y.array().exp().matrix();
    const Eigen::VectorXd total = g.rowwise().sum();
    t.accumulate(a, g - p.cwiseProduct(total.replicate(1, g.cols())));
  });
}

// r x c -> r x 1
inline Var logsumexp_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
  }
  return a.tape().push(std::move(y), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    const Matrix& x = a.value();
    Matrix p = (x - y.replicate(1, x.cols())).array().exp().matrix();
    t.accumulate(a, p.cwiseProduct(g.replicate(1, x.cols())));
  });
}

// Zero-mean, unit-variance per row (no affine part).
inline Var layer_norm_rows(const Var& a, double eps = 1e-5) {
  const Matrix& x = a.value();
  const Eigen::Index c = x.cols();
  Matrix y(x.rows(), c);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    y.row(i) = ((x.row(i).array() - mean) * inv_std(i)).matrix();
  }
  return a.tape().push(std::move(y), {a}, [a, inv_std](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double gm = g.row(i).mean();
      const double gy = g.row(i).cwiseProduct(y.row(i)).mean();
      dx.row(i) = ((g.row(i).array() - gm - y.row(i).array() * gy) * inv_std(i)).matrix();
    }
    t.accumulate(a, dx);
  });
}

// r x c -> 1 x c
inline Var mean_rows(const Var& a) {
  const double rows = static_cast<double>(a.rows());
  return a.tape().push(a.value().colwise().mean(), {a}, [a, rows](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, (g / rows).replicate(a.rows(), 1));
  });
}

// r x c -> r x 1
inline Var sum_cols(const Var& a) {
  return a.tape().push(a.value().rowwise().sum(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

inline Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

inline Var element(const Var& a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) throw ArgumentError("element: out of range");
  Matrix out(1, 1);
  out(0, 0) = a.value()(r, c);
  return a.tape().push(std::move(out), {a}, [a, r, c](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full(r, c) = g(0, 0);
    t.accumulate(a, full);
  });
}

// Pairwise cosine similarity between rows of a (n x d) and rows of b (m x d).
// A pair with a zero-norm side scores 0 and passes no gradient.
inline Var cosine_rows(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ConfigError("cosine_rows: width mismatch");
  const Matrix& x = a.value();
  const Matrix& k = b.value();
  const Eigen::VectorXd xn = x.rowwise().norm();
  const Eigen::VectorXd kn = k.rowwise().norm();
  Matrix y = Matrix::Zero(x.rows(), k.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < k.rows(); ++j)
      if (xn(i) > 0.0 && kn(j) > 0.0) y(i, j) = x.row(i).dot(k.row(j)) / (xn(i) * kn(j));
  return a.tape().push(std::move(y), {a, b}, [a, b, xn, kn](Tape& t, const Matrix& g, const Matrix& y) {
    const Matrix& x = a.value();
    const Matrix& k = b.value();
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    Matrix dk = Matrix::Zero(k.rows(), k.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (xn(i) <= 0.0) continue;
      for (Eigen::Index j = 0; j < k.rows(); ++j) {
        if (kn(j) <= 0.0 || g(i, j) == 0.0) continue;
        const double inv = 1.0 / (xn(i) * kn(j));
        dx.row(i) += g(i, j) * (k.row(j) * inv - y(i, j) * x.row(i) / (xn(i) * xn(i)));
        dk.row(j) += g(i, j) * (x.row(i) * inv - y(i, j) * k.row(j) / (kn(j) * kn(j)));
      }
    }
    t.accumulate(a, dx);
    t.accumulate(b, dk);
  });
}

// Rotary position encoding applied independently to each head block of width
// head_dim. Row i is rotated by angles i * base^(-2j/head_dim).
inline Matrix rotary_angles(Eigen::Index rows, Eigen::Index head_dim, double base = 10000.0) {
  Matrix angles(rows, head_dim / 2);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < head_dim / 2; ++j)
      angles(i, j) = static_cast<double>(i) * std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(head_dim));
  return angles;
}

inline Matrix rotate_pairs(const Matrix& x, const Matrix& angles, Eigen::Index head_dim, double sign) {
  Matrix y = x;
  const Eigen::Index half = head_dim / 2;
  for (Eigen::Index h = 0; h + head_dim <= x.cols(); h += head_dim)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < half; ++j) {
        const double c = std::cos(angles(i, j)), s = sign * std::sin(angles(i, j));
        const double u = x(i, h + 2 * j), v = x(i, h + 2 * j + 1);
        y(i, h + 2 * j) = c * u - s * v;
        y(i, h + 2 * j + 1) = s * u + c * v;
      }
  return y;
}

inline Var rotary(const Var& a, Eigen::Index head_dim) {
  if (head_dim % 2 != 0 || a.cols() % head_dim != 0) throw ConfigError("rotary: head width must be even and divide the row width");
  Matrix angles = rotary_angles(a.rows(), head_dim);
  Matrix y = rotate_pairs(a.value(), angles, head_dim, 1.0);
  return a.tape().push(std::move(y), {a}, [a, angles, head_dim](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, rotate_pairs(g, angles, head_dim, -1.0));
  });
}

}  // namespace mobllm::ad
