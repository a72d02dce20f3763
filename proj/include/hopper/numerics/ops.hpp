// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hopper/numerics/tape.hpp"

// Differentiable primitives. Every op checks shapes up front and throws
// Errc::invalid_shape on mismatch; backward rules are written against the
// row-major layout used everywhere else.

namespace hopper::ops {

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename S>
void require_same_shape(const char* op, Var<S> a, Var<S> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::invalid_shape, std::string(op) + ": " + shape_str(a.rows(), a.cols()) + " vs " +
                                         shape_str(b.rows(), b.cols()));
  }
}

inline void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw Error(Errc::invalid_shape, std::string(op) + ": " + detail);
}

}  // namespace detail

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::require(a.cols() == b.rows(), "matmul",
                  detail::shape_str(a.rows(), a.cols()) + " * " + detail::shape_str(b.rows(), b.cols()));
  Matrix<S> out = a.value() * b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
    if (a.needs_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.needs_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

/// a * b^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  detail::require(a.cols() == b.cols(), "matmul_nt",
                  detail::shape_str(a.rows(), a.cols()) + " * T(" + detail::shape_str(b.rows(), b.cols()) + ")");
  Matrix<S> out = a.value() * b.value().transpose();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
    if (a.needs_grad()) t.accumulate(a, g * b.value());
    if (b.needs_grad()) t.accumulate(b, g.transpose() * a.value());
  });
}

/// x * w + bias, bias broadcast over rows.
template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> bias) {
  detail::require(x.cols() == w.rows() && bias.rows() == 1 && bias.cols() == w.cols(), "linear",
                  detail::shape_str(x.rows(), x.cols()) + " * " + detail::shape_str(w.rows(), w.cols()) +
                      " + " + detail::shape_str(bias.rows(), bias.cols()));
  Matrix<S> out = x.value() * w.value();
  out.rowwise() += bias.value().row(0);
  return x.tape->push(std::move(out), {x, w, bias}, [x, w, bias](Tape<S>& t, const Matrix<S>& g) {
    if (x.needs_grad()) t.accumulate(x, g * w.value().transpose());
    if (w.needs_grad()) t.accumulate(w, x.value().transpose() * g);
    if (bias.needs_grad()) t.accumulate(bias, g.colwise().sum());
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require_same_shape("add", a, b);
  Matrix<S> out = a.value() + b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require_same_shape("sub", a, b);
  Matrix<S> out = a.value() - b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

/// Elementwise product.
template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require_same_shape("mul", a, b);
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
    if (a.needs_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
    if (b.needs_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

/// Elementwise product with a constant matrix (dropout masks, fixed weights).
template <typename S>
Var<S> mul_const(Var<S> a, Matrix<S> c) {
  detail::require(a.rows() == c.rows() && a.cols() == c.cols(), "mul_const", "shape mismatch");
  Matrix<S> out = a.value().cwiseProduct(c);
  return a.tape->push(std::move(out), {a}, [a, c = std::move(c)](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g.cwiseProduct(c));
  });
}

template <typename S>
Var<S> scale(Var<S> a, S s) {
  Matrix<S> out = a.value() * s;
  return a.tape->push(std::move(out), {a}, [a, s](Tape<S>& t, const Matrix<S>& g) { t.accumulate(a, g * s); });
}

/// a + row, with `row` (1 x n) broadcast over a's rows.
template <typename S>
Var<S> add_row(Var<S> a, Var<S> row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row", "row width mismatch");
  Matrix<S> out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape->push(std::move(out), {a, row}, [a, row](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g);
    if (row.needs_grad()) t.accumulate(row, g.colwise().sum());
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Matrix<S> out = a.value().cwiseMax(S(0));
  return a.tape->push(std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, (a.value().array() > S(0)).select(g, S(0)));
  });
}

template <typename S>
Var<S> leaky_relu(Var<S> a, S slope) {
  Matrix<S> out = (a.value().array() > S(0)).select(a.value(), a.value() * slope);
  return a.tape->push(std::move(out), {a}, [a, slope](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, (a.value().array() > S(0)).select(g, g * slope));
  });
}

template <typename S>
Var<S> elu(Var<S> a) {
  Matrix<S> out = (a.value().array() > S(0)).select(a.value(), a.value().array().exp() - S(1));
  return a.tape->push(std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> d = (a.value().array() > S(0)).select(Matrix<S>::Ones(a.rows(), a.cols()), a.value().array().exp());
    t.accumulate(a, g.cwiseProduct(d));
  });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Matrix<S> out = (S(1) + (-a.value().array()).exp()).inverse().matrix();
  auto out_copy = out;
  return a.tape->push(std::move(out), {a}, [a, y = std::move(out_copy)](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, (g.array() * y.array() * (S(1) - y.array())).matrix());
  });
}

template <typename S>
Var<S> tanh(Var<S> a) {
  Matrix<S> out = a.value().array().tanh().matrix();
  auto out_copy = out;
  return a.tape->push(std::move(out), {a}, [a, y = std::move(out_copy)](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, (g.array() * (S(1) - y.array().square())).matrix());
  });
}

template <typename S>
Var<S> exp(Var<S> a) {
  Matrix<S> out = a.value().array().exp().matrix();
  auto out_copy = out;
  return a.tape->push(std::move(out), {a}, [a, y = std::move(out_copy)](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g.cwiseProduct(y));
  });
}

/// |a|; the derivative at exactly zero is taken as zero.
template <typename S>
Var<S> abs(Var<S> a) {
  Matrix<S> out = a.value().cwiseAbs();
  return a.tape->push(std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g.cwiseProduct(a.value().unaryExpr([](S x) { return S((x > 0) - (x < 0)); })));
  });
}

template <typename S>
Var<S> sum_all(Var<S> a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, Matrix<S>::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

/// sum(a .* c) for a constant weight matrix c.
template <typename S>
Var<S> weighted_sum(Var<S> a, Matrix<S> c) {
  detail::require(a.rows() == c.rows() && a.cols() == c.cols(), "weighted_sum", "shape mismatch");
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().cwiseProduct(c).sum();
  return a.tape->push(std::move(out), {a}, [a, c = std::move(c)](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, c * g(0, 0));
  });
}

/// Column means over rows: n x m -> 1 x m.
template <typename S>
Var<S> mean_rows(Var<S> a) {
  detail::require(a.rows() > 0, "mean_rows", "no rows");
  const S inv = S(1) / static_cast<S>(a.rows());
  Matrix<S> out = a.value().colwise().sum() * inv;
  return a.tape->push(std::move(out), {a}, [a, inv](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> d = g.replicate(a.rows(), 1) * inv;
    t.accumulate(a, d);
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  detail::require(!parts.empty(), "concat_cols", "nothing to concatenate");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols", "row count mismatch");
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return parts.front().tape->push(std::move(out), parts, [parts](Tape<S>& t, const Matrix<S>& g) {
    Eigen::Index o = 0;
    for (const auto& p : parts) {
      if (p.needs_grad()) t.accumulate(p, g.middleCols(o, p.cols()));
      o += p.cols();
    }
  });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  detail::require(!parts.empty(), "concat_rows", "nothing to concatenate");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "concat_rows", "column count mismatch");
    rows += p.rows();
  }
  Matrix<S> out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return parts.front().tape->push(std::move(out), parts, [parts](Tape<S>& t, const Matrix<S>& g) {
    Eigen::Index o = 0;
    for (const auto& p : parts) {
      if (p.needs_grad()) t.accumulate(p, g.middleRows(o, p.rows()));
      o += p.rows();
    }
  });
}

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index start, Eigen::Index n) {
  detail::require(start >= 0 && n >= 0 && start + n <= a.cols(), "slice_cols", "range out of bounds");
  Matrix<S> out = a.value().middleCols(start, n);
  return a.tape->push(std::move(out), {a}, [a, start, n](Tape<S>& t, const Matrix<S>& g) {
    t.grad_slot(a).middleCols(start, n) += g;
  });
}

/// Row gather; indices may repeat. Backward scatter-adds.
template <typename S>
Var<S> gather_rows(Var<S> a, std::vector<int> idx) {
  Matrix<S> out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    detail::require(idx[i] >= 0 && idx[i] < a.rows(), "gather_rows", "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  }
  return a.tape->push(std::move(out), {a}, [a, idx = std::move(idx)](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S>& slot = t.grad_slot(a);
    for (std::size_t i = 0; i < idx.size(); ++i) slot.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

/// Row-wise softmax with max subtraction.
template <typename S>
Var<S> row_softmax(Var<S> a) {
  Matrix<S> out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r).array() -= out.row(r).maxCoeff();
    out.row(r) = out.row(r).array().exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  auto y = out;
  return a.tape->push(std::move(out), {a}, [a, y = std::move(y)](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> gy = g.cwiseProduct(y);
    Matrix<S> d = gy - (y.array().colwise() * gy.rowwise().sum().array()).matrix();
    t.accumulate(a, d);
  });
}

/// Row-wise log-softmax.
template <typename S>
Var<S> log_softmax_rows(Var<S> a) {
  Matrix<S> out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const S mx = out.row(r).maxCoeff();
    const S lse = mx + std::log((out.row(r).array() - mx).exp().sum());
    out.row(r).array() -= lse;
  }
  auto y = out;
  return a.tape->push(std::move(out), {a}, [a, y = std::move(y)](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> p = y.array().exp().matrix();
    Matrix<S> d = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate(a, d);
  });
}

/// Softmax within groups of rows, independently per column. `group[i]` names
/// the group of row i; groups need not be contiguous.
template <typename S>
Var<S> segment_softmax(Var<S> a, std::vector<int> group, int num_groups) {
  detail::require(static_cast<Eigen::Index>(group.size()) == a.rows(), "segment_softmax", "group size mismatch");
  const Eigen::Index cols = a.cols();
  Matrix<S> mx = Matrix<S>::Constant(num_groups, cols, -std::numeric_limits<S>::infinity());
  for (std::size_t i = 0; i < group.size(); ++i) mx.row(group[i]) = mx.row(group[i]).cwiseMax(a.value().row(i));
  Matrix<S> out(a.rows(), cols);
  Matrix<S> sums = Matrix<S>::Zero(num_groups, cols);
  for (std::size_t i = 0; i < group.size(); ++i) {
    out.row(i) = (a.value().row(i) - mx.row(group[i])).array().exp().matrix();
    sums.row(group[i]) += out.row(i);
  }
  for (std::size_t i = 0; i < group.size(); ++i) out.row(i).array() /= sums.row(group[i]).array();
  auto y = out;
  return a.tape->push(std::move(out), {a},
                      [a, y = std::move(y), group = std::move(group), num_groups](Tape<S>& t, const Matrix<S>& g) {
                        Matrix<S> gy = g.cwiseProduct(y);
                        Matrix<S> gs = Matrix<S>::Zero(num_groups, y.cols());
                        for (std::size_t i = 0; i < group.size(); ++i) gs.row(group[i]) += gy.row(i);
                        Matrix<S> d(y.rows(), y.cols());
                        for (std::size_t i = 0; i < group.size(); ++i) {
                          d.row(i) = gy.row(i) - y.row(i).cwiseProduct(gs.row(group[i]));
                        }
                        t.accumulate(a, d);
                      });
}

/// Log-softmax of a column vector within groups. Every group must be non-empty.
template <typename S>
Var<S> segment_log_softmax(Var<S> a, std::vector<int> group, int num_groups) {
  detail::require(a.cols() == 1 && static_cast<Eigen::Index>(group.size()) == a.rows(), "segment_log_softmax",
                  "expects a column with one group id per row");
  std::vector<S> mx(num_groups, -std::numeric_limits<S>::infinity());
  for (std::size_t i = 0; i < group.size(); ++i) mx[group[i]] = std::max(mx[group[i]], a.value()(i, 0));
  std::vector<S> sums(num_groups, S(0));
  for (std::size_t i = 0; i < group.size(); ++i) sums[group[i]] += std::exp(a.value()(i, 0) - mx[group[i]]);
  Matrix<S> out(a.rows(), 1);
  for (std::size_t i = 0; i < group.size(); ++i) {
    out(i, 0) = a.value()(i, 0) - mx[group[i]] - std::log(sums[group[i]]);
  }
  auto y = out;
  return a.tape->push(std::move(out), {a},
                      [a, y = std::move(y), group = std::move(group), num_groups](Tape<S>& t, const Matrix<S>& g) {
                        std::vector<S> gs(num_groups, S(0));
                        for (std::size_t i = 0; i < group.size(); ++i) gs[group[i]] += g(i, 0);
                        Matrix<S> d(y.rows(), 1);
                        for (std::size_t i = 0; i < group.size(); ++i) {
                          d(i, 0) = g(i, 0) - std::exp(y(i, 0)) * gs[group[i]];
                        }
                        t.accumulate(a, d);
                      });
}

/// Sums rows into `num_groups` buckets.
template <typename S>
Var<S> segment_sum(Var<S> a, std::vector<int> group, int num_groups) {
  detail::require(static_cast<Eigen::Index>(group.size()) == a.rows(), "segment_sum", "group size mismatch");
  Matrix<S> out = Matrix<S>::Zero(num_groups, a.cols());
  for (std::size_t i = 0; i < group.size(); ++i) out.row(group[i]) += a.value().row(i);
  return a.tape->push(std::move(out), {a}, [a, group = std::move(group)](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> d(a.rows(), a.cols());
    for (std::size_t i = 0; i < group.size(); ++i) d.row(i) = g.row(group[i]);
    t.accumulate(a, d);
  });
}

/// Per-head dot products. x is n x (heads*f) laid out head-major, w is
/// 1 x (heads*f); the result is n x heads.
template <typename S>
Var<S> head_dot(Var<S> x, Var<S> w, int heads) {
  detail::require(w.rows() == 1 && w.cols() == x.cols() && x.cols() % heads == 0, "head_dot", "width mismatch");
  const Eigen::Index f = x.cols() / heads;
  Matrix<S> out(x.rows(), heads);
  for (int h = 0; h < heads; ++h) {
    out.col(h) = x.value().middleCols(h * f, f) * w.value().middleCols(h * f, f).transpose();
  }
  return x.tape->push(std::move(out), {x, w}, [x, w, heads, f](Tape<S>& t, const Matrix<S>& g) {
    if (x.needs_grad()) {
      Matrix<S> dx(x.rows(), x.cols());
      for (int h = 0; h < heads; ++h) dx.middleCols(h * f, f) = g.col(h) * w.value().middleCols(h * f, f);
      t.accumulate(x, dx);
    }
    if (w.needs_grad()) {
      Matrix<S> dw(1, w.cols());
      for (int h = 0; h < heads; ++h) dw.middleCols(h * f, f) = g.col(h).transpose() * x.value().middleCols(h * f, f);
      t.accumulate(w, dw);
    }
  });
}

/// Scales each head block of x (n x heads*f) by the matching column of
/// alpha (n x heads).
template <typename S>
Var<S> head_scale(Var<S> x, Var<S> alpha) {
  detail::require(alpha.rows() == x.rows() && alpha.cols() > 0 && x.cols() % alpha.cols() == 0, "head_scale",
                  "shape mismatch");
  const int heads = static_cast<int>(alpha.cols());
  const Eigen::Index f = x.cols() / heads;
  Matrix<S> out(x.rows(), x.cols());
  for (int h = 0; h < heads; ++h) {
    out.middleCols(h * f, f) = x.value().middleCols(h * f, f).array().colwise() * alpha.value().col(h).array();
  }
  return x.tape->push(std::move(out), {x, alpha}, [x, alpha, heads, f](Tape<S>& t, const Matrix<S>& g) {
    if (x.needs_grad()) {
      Matrix<S> dx(x.rows(), x.cols());
      for (int h = 0; h < heads; ++h) {
        dx.middleCols(h * f, f) = g.middleCols(h * f, f).array().colwise() * alpha.value().col(h).array();
      }
      t.accumulate(x, dx);
    }
    if (alpha.needs_grad()) {
      Matrix<S> da(alpha.rows(), heads);
      for (int h = 0; h < heads; ++h) {
        da.col(h) = g.middleCols(h * f, f).cwiseProduct(x.value().middleCols(h * f, f)).rowwise().sum();
      }
      t.accumulate(alpha, da);
    }
  });
}

/// Mean over head blocks: n x (heads*f) -> n x f.
template <typename S>
Var<S> head_mean(Var<S> x, int heads) {
  detail::require(x.cols() % heads == 0, "head_mean", "width not divisible by heads");
  const Eigen::Index f = x.cols() / heads;
  Matrix<S> out = Matrix<S>::Zero(x.rows(), f);
  for (int h = 0; h < heads; ++h) out += x.value().middleCols(h * f, f);
  out /= static_cast<S>(heads);
  return x.tape->push(std::move(out), {x}, [x, heads, f](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> dx(x.rows(), x.cols());
    for (int h = 0; h < heads; ++h) dx.middleCols(h * f, f) = g / static_cast<S>(heads);
    t.accumulate(x, dx);
  });
}

/// Row-wise layer normalisation with learned gain and bias (both 1 x n).
template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-5)) {
  detail::require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(),
                  "layer_norm", "gain/bias width mismatch");
  const Eigen::Index n = x.cols();
  Matrix<S> xhat(x.rows(), n);
  Matrix<S> inv_std(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mu = x.value().row(r).mean();
    const S var = (x.value().row(r).array() - mu).square().mean();
    inv_std(r, 0) = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r, 0);
  }
  Matrix<S> out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return x.tape->push(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n](Tape<S>& t, const Matrix<S>& g) {
        if (gain.needs_grad()) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (bias.needs_grad()) t.accumulate(bias, g.colwise().sum());
        if (x.needs_grad()) {
          Matrix<S> dxhat = g.array().rowwise() * gain.value().row(0).array();
          Matrix<S> dx(x.rows(), n);
          for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const S m1 = dxhat.row(r).mean();
            const S m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            dx.row(r) = ((dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r, 0)).matrix();
          }
          t.accumulate(x, dx);
        }
      });
}

/// Fused LSTM cell over a batch of rows.
///
/// gates = x * w_ih + h * w_hh + bias, split as [input | forget | candidate |
/// output]. Returns [h' | c'] concatenated column-wise (rows x 2*hidden).
template <typename S>
Var<S> lstm_cell(Var<S> x, Var<S> h, Var<S> c, Var<S> w_ih, Var<S> w_hh, Var<S> bias) {
  const Eigen::Index hid = h.cols();
  detail::require(c.cols() == hid && c.rows() == h.rows() && x.rows() == h.rows(), "lstm_cell", "state shape mismatch");
  detail::require(w_ih.rows() == x.cols() && w_ih.cols() == 4 * hid, "lstm_cell",
                  "input weights " + detail::shape_str(w_ih.rows(), w_ih.cols()) + " for input width " +
                      std::to_string(x.cols()) + ", hidden " + std::to_string(hid));
  detail::require(w_hh.rows() == hid && w_hh.cols() == 4 * hid, "lstm_cell", "recurrent weights shape mismatch");
  detail::require(bias.rows() == 1 && bias.cols() == 4 * hid, "lstm_cell", "bias shape mismatch");

  Matrix<S> gates = x.value() * w_ih.value();
  gates.noalias() += h.value() * w_hh.value();
  gates.rowwise() += bias.value().row(0);
  auto sig = [](auto&& z) { return (S(1) + (-z.array()).exp()).inverse(); };
  Matrix<S> i = sig(gates.middleCols(0, hid));
  Matrix<S> f = sig(gates.middleCols(hid, hid));
  Matrix<S> gg = gates.middleCols(2 * hid, hid).array().tanh();
  Matrix<S> o = sig(gates.middleCols(3 * hid, hid));
  Matrix<S> c_next = f.cwiseProduct(c.value()) + i.cwiseProduct(gg);
  Matrix<S> tc = c_next.array().tanh();
  Matrix<S> out(h.rows(), 2 * hid);
  out.leftCols(hid) = o.cwiseProduct(tc);
  out.rightCols(hid) = c_next;

  return x.tape->push(
      std::move(out), {x, h, c, w_ih, w_hh, bias},
      [x, h, c, w_ih, w_hh, bias, hid, i = std::move(i), f = std::move(f), gg = std::move(gg), o = std::move(o),
       tc = std::move(tc)](Tape<S>& t, const Matrix<S>& g) {
        const auto dh = g.leftCols(hid);
        Matrix<S> dc = g.rightCols(hid);
        dc.array() += dh.array() * o.array() * (S(1) - tc.array().square());
        Matrix<S> dgates(dh.rows(), 4 * hid);
        dgates.middleCols(0, hid) = (dc.array() * gg.array() * i.array() * (S(1) - i.array())).matrix();
        dgates.middleCols(hid, hid) = (dc.array() * c.value().array() * f.array() * (S(1) - f.array())).matrix();
        dgates.middleCols(2 * hid, hid) = (dc.array() * i.array() * (S(1) - gg.array().square())).matrix();
        dgates.middleCols(3 * hid, hid) = (dh.array() * tc.array() * o.array() * (S(1) - o.array())).matrix();
        if (x.needs_grad()) t.accumulate(x, dgates * w_ih.value().transpose());
        if (h.needs_grad()) t.accumulate(h, dgates * w_hh.value().transpose());
        if (c.needs_grad()) t.accumulate(c, dc.cwiseProduct(f));
        if (w_ih.needs_grad()) t.accumulate(w_ih, x.value().transpose() * dgates);
        if (w_hh.needs_grad()) t.accumulate(w_hh, h.value().transpose() * dgates);
        if (bias.needs_grad()) t.accumulate(bias, dgates.colwise().sum());
      });
}

/// Scores candidate actions against per-row query vectors.
///
/// query is rows x 2d, split as [relation part | entity part]. Candidate k
/// belongs to query row `row[k]` and is the concatenation of relation
/// embedding `relations.row(rel[k])` and entity embedding
/// `entities.row(ent[k])`. The output is a K x 1 column of inner products.
template <typename S>
Var<S> candidate_scores(Var<S> query, Var<S> relations, Var<S> entities, std::vector<int> row, std::vector<int> rel,
                        std::vector<int> ent) {
  const Eigen::Index d = relations.cols();
  detail::require(entities.cols() == d && query.cols() == 2 * d, "candidate_scores",
                  "query width " + std::to_string(query.cols()) + " vs embedding width " + std::to_string(d));
  detail::require(row.size() == rel.size() && rel.size() == ent.size(), "candidate_scores", "index list mismatch");
  const std::size_t k = row.size();
  Matrix<S> out(static_cast<Eigen::Index>(k), 1);
  for (std::size_t j = 0; j < k; ++j) {
    detail::require(row[j] >= 0 && row[j] < query.rows() && rel[j] >= 0 && rel[j] < relations.rows() && ent[j] >= 0 &&
                        ent[j] < entities.rows(),
                    "candidate_scores", "index out of range");
    out(j, 0) = query.value().row(row[j]).leftCols(d).dot(relations.value().row(rel[j])) +
                query.value().row(row[j]).rightCols(d).dot(entities.value().row(ent[j]));
  }
  return query.tape->push(
      std::move(out), {query, relations, entities},
      [query, relations, entities, d, row = std::move(row), rel = std::move(rel), ent = std::move(ent)](
          Tape<S>& t, const Matrix<S>& g) {
        if (query.needs_grad()) {
          Matrix<S>& gq = t.grad_slot(query);
          for (std::size_t j = 0; j < row.size(); ++j) {
            gq.row(row[j]).leftCols(d) += g(j, 0) * relations.value().row(rel[j]);
            gq.row(row[j]).rightCols(d) += g(j, 0) * entities.value().row(ent[j]);
          }
        }
        if (relations.needs_grad()) {
          Matrix<S>& gr = t.grad_slot(relations);
          for (std::size_t j = 0; j < row.size(); ++j) gr.row(rel[j]) += g(j, 0) * query.value().row(row[j]).leftCols(d);
        }
        if (entities.needs_grad()) {
          Matrix<S>& ge = t.grad_slot(entities);
          for (std::size_t j = 0; j < row.size(); ++j) ge.row(ent[j]) += g(j, 0) * query.value().row(row[j]).rightCols(d);
        }
      });
}

/// Inverted dropout: zeroes entries with probability p and scales survivors
/// by 1/(1-p). Identity when not training or p == 0.
template <typename S>
Var<S> dropout(Var<S> a, double p, bool training, Rng* rng) {
  if (!training || p <= 0.0) return a;
  if (rng == nullptr) throw Error(Errc::config, "dropout in training mode needs an rng");
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  Matrix<S> mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < p ? S(0) : keep_scale;
  return mul_const(a, std::move(mask));
}

}  // namespace hopper::ops
