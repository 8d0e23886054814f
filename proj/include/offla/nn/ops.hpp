#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "offla/nn/tensor.hpp"

namespace offla::nn {

using detail::grad_of;
using detail::require;
using detail::shape_str;
using detail::wants_grad;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul", "inner dimensions differ: " + shape_str(a) + " * " + shape_str(b));
  Matrix out;
  out.noalias() = a.value() * b.value();
  return make_op(std::move(out), "matmul", {a, b}, [](Node& self) {
    const Matrix& A = self.parents[0]->value;
    const Matrix& B = self.parents[1]->value;
    if (wants_grad(self, 0)) grad_of(self, 0).noalias() += self.grad * B.transpose();
    if (wants_grad(self, 1)) grad_of(self, 1).noalias() += A.transpose() * self.grad;
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", shape_str(a) + " vs " + shape_str(b));
  return make_op(a.value() + b.value(), "add", {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) grad_of(self, 0) += self.grad;
    if (wants_grad(self, 1)) grad_of(self, 1) += self.grad;
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", shape_str(a) + " vs " + shape_str(b));
  return make_op(a.value() - b.value(), "sub", {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) grad_of(self, 0) += self.grad;
    if (wants_grad(self, 1)) grad_of(self, 1) -= self.grad;
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul", shape_str(a) + " vs " + shape_str(b));
  return make_op(a.value().cwiseProduct(b.value()), "mul", {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) grad_of(self, 0) += self.grad.cwiseProduct(self.parents[1]->value);
    if (wants_grad(self, 1)) grad_of(self, 1) += self.grad.cwiseProduct(self.parents[0]->value);
  });
}

inline Tensor scale(const Tensor& a, double s) {
  return make_op(a.value() * s, "scale", {a}, [s](Node& self) { grad_of(self, 0) += self.grad * s; });
}

/// a (m x n) + bias (1 x n) broadcast over rows.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require(bias.rows() == 1 && bias.cols() == a.cols(), "add_bias", shape_str(a) + " + " + shape_str(bias));
  Matrix out = a.value();
  out.rowwise() += bias.value().row(0);
  return make_op(std::move(out), "add_bias", {a, bias}, [](Node& self) {
    if (wants_grad(self, 0)) grad_of(self, 0) += self.grad;
    if (wants_grad(self, 1)) grad_of(self, 1) += self.grad.colwise().sum();
  });
}

inline Tensor relu(const Tensor& a) {
  return make_op(a.value().cwiseMax(0.0), "relu", {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    grad_of(self, 0) += (x.array() > 0.0).select(self.grad, 0.0);
  });
}

/// Exact GeLU, x * Phi(x).
inline Tensor gelu(const Tensor& a) {
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
  return make_op(std::move(out), "gelu", {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    Matrix d = x.unaryExpr([](double v) {
      return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    grad_of(self, 0) += self.grad.cwiseProduct(d);
  });
}

inline Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), "sum", {a}, [](Node& self) { grad_of(self, 0).array() += self.grad(0, 0); });
}

inline Tensor mean(const Tensor& a) {
  require(a.size() > 0, "mean", "empty tensor");
  Matrix out(1, 1);
  const double n = static_cast<double>(a.size());
  out(0, 0) = a.value().sum() / n;
  return make_op(std::move(out), "mean", {a}, [n](Node& self) { grad_of(self, 0).array() += self.grad(0, 0) / n; });
}

/// Mean of the squared entries of (a - target).
inline Tensor mse(const Tensor& a, const Matrix& target) {
  require(a.rows() == target.rows() && a.cols() == target.cols(), "mse", "prediction/target shapes differ");
  require(a.size() > 0, "mse", "empty tensor");
  const Matrix diff = a.value() - target;
  const double n = static_cast<double>(a.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return make_op(std::move(out), "mse", {a}, [diff, n](Node& self) { grad_of(self, 0) += diff * (2.0 * self.grad(0, 0) / n); });
}

/// Row-wise layer normalization followed by a per-feature affine map.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-9) {
  const auto d = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d, "layer_norm",
          "affine parameters must be 1x" + std::to_string(d));
  const Matrix& X = x.value();
  Matrix xhat(X.rows(), d);
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_op(std::move(out), "layer_norm", {x, gamma, beta}, [xhat, inv_std](Node& self) {
    const Matrix& G = self.grad;
    const auto& g = self.parents[1]->value;
    if (wants_grad(self, 1)) grad_of(self, 1) += G.cwiseProduct(xhat).colwise().sum();
    if (wants_grad(self, 2)) grad_of(self, 2) += G.colwise().sum();
    if (wants_grad(self, 0)) {
      const double d = static_cast<double>(xhat.cols());
      Matrix& gx = grad_of(self, 0);
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        const Eigen::RowVectorXd dxhat = G.row(r).cwiseProduct(g.row(0));
        const double m1 = dxhat.sum() / d;
        const double m2 = dxhat.cwiseProduct(xhat.row(r)).sum() / d;
        gx.row(r).array() += inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2);
      }
    }
  });
}

/// Rows of `table` picked by `indices`; a negative index yields a zero row.
inline Tensor embedding(const Tensor& table, std::span<const int> indices) {
  const auto d = table.cols();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(indices.size()), d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0) continue;
    require(idx < table.rows(), "embedding", "index " + std::to_string(idx) + " out of range for table " +
                                                 shape_str(table));
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(idx);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return make_op(std::move(out), "embedding", {table}, [idx = std::move(idx)](Node& self) {
    Matrix& g = grad_of(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] >= 0) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

/// Gathers rows of x by index (duplicates allowed).
inline Tensor select_rows(const Tensor& x, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < x.rows(), "select_rows", "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return make_op(std::move(out), "select_rows", {x}, [idx = std::move(idx)](Node& self) {
    Matrix& g = grad_of(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

/// Interleaves equally shaped inputs row by row: out row (m*i + j) = parts[j] row i.
inline Tensor interleave_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "interleave_rows", "no inputs");
  const auto n = parts[0].rows(), d = parts[0].cols();
  const auto m = static_cast<Eigen::Index>(parts.size());
  for (const auto& p : parts) require(p.rows() == n && p.cols() == d, "interleave_rows", "inputs differ in shape");
  Matrix out(n * m, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) out.row(i * m + j) = parts[static_cast<std::size_t>(j)].value().row(i);
  return make_op(std::move(out), "interleave_rows", parts, [m](Node& self) {
    const auto n = self.grad.rows() / m;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!wants_grad(self, static_cast<std::size_t>(j))) continue;
      Matrix& g = grad_of(self, static_cast<std::size_t>(j));
      for (Eigen::Index i = 0; i < n; ++i) g.row(i) += self.grad.row(i * m + j);
    }
  });
}

/// Entry (i, cols[i]) of every row, as an (n x 1) column.
inline Tensor gather_cols(const Tensor& x, std::span<const int> cols) {
  require(static_cast<Eigen::Index>(cols.size()) == x.rows(), "gather_cols", "one column index per row expected");
  Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int c = cols[static_cast<std::size_t>(i)];
    require(c >= 0 && c < x.cols(), "gather_cols", "column index out of range");
    out(i, 0) = x.value()(i, c);
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return make_op(std::move(out), "gather_cols", {x}, [idx = std::move(idx)](Node& self) {
    Matrix& g = grad_of(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) g(static_cast<Eigen::Index>(i), idx[i]) += self.grad(static_cast<Eigen::Index>(i), 0);
  });
}

/// Row-wise log-sum-exp, as an (n x 1) column.
inline Tensor logsumexp_rows(const Tensor& x) {
  const Matrix& X = x.value();
  Matrix out(X.rows(), 1);
  Matrix soft(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double m = X.row(r).maxCoeff();
    soft.row(r) = (X.row(r).array() - m).exp();
    const double s = soft.row(r).sum();
    soft.row(r) /= s;
    out(r, 0) = m + std::log(s);
  }
  return make_op(std::move(out), "logsumexp_rows", {x}, [soft](Node& self) {
    grad_of(self, 0) += (soft.array().colwise() * self.grad.col(0).array()).matrix();
  });
}

/// Row-wise softmax of a plain matrix (no graph).
inline Matrix softmax_rows(const Matrix& X) {
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    out.row(r) = (X.row(r).array() - X.row(r).maxCoeff()).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Weighted mean cross-entropy of softmax(logits) against class indices.
/// Rows with weight 0 do not contribute; all-zero weights give a zero loss.
inline Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets,
                                    std::span<const double> weights = {}) {
  const auto n = logits.rows();
  require(static_cast<Eigen::Index>(targets.size()) == n, "softmax_cross_entropy", "one target per row expected");
  require(weights.empty() || static_cast<Eigen::Index>(weights.size()) == n, "softmax_cross_entropy",
          "one weight per row expected");
  Matrix prob = softmax_rows(logits.value());
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  double wsum = 0.0, loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double wr = w[static_cast<std::size_t>(r)];
    if (wr == 0.0) continue;
    const int t = targets[static_cast<std::size_t>(r)];
    require(t >= 0 && t < logits.cols(), "softmax_cross_entropy", "target class out of range");
    wsum += wr;
    const double m = logits.value().row(r).maxCoeff();
    const double lse = m + std::log((logits.value().row(r).array() - m).exp().sum());
    loss += wr * (lse - logits.value()(r, t));
  }
  Matrix out(1, 1);
  out(0, 0) = wsum > 0.0 ? loss / wsum : 0.0;
  std::vector<int> tg(targets.begin(), targets.end());
  return make_op(std::move(out), "softmax_cross_entropy", {logits},
                 [prob = std::move(prob), tg = std::move(tg), w = std::move(w), wsum](Node& self) {
                   if (wsum == 0.0) return;
                   Matrix& g = grad_of(self, 0);
                   const double scale = self.grad(0, 0) / wsum;
                   for (Eigen::Index r = 0; r < prob.rows(); ++r) {
                     const double wr = w[static_cast<std::size_t>(r)];
                     if (wr == 0.0) continue;
                     g.row(r) += prob.row(r) * (wr * scale);
                     g(r, tg[static_cast<std::size_t>(r)]) -= wr * scale;
                   }
                 });
}

}  // namespace offla::nn
