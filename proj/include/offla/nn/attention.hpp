#pragma once

// Scaled dot-product self-attention with an arbitrary boolean mask per
// sequence. Disallowed keys get exactly zero weight (Eigen's vectorised exp
// clamps large negative inputs, so an additive -inf-ish logit is not enough);
// a query with no allowed key outputs zeros.

#include <cmath>
#include <span>
#include <vector>

#include "offla/nn/tensor.hpp"
#include "offla/util/bool_matrix.hpp"

namespace offla::nn {

inline constexpr double kMaskedLogit = -1e30;

namespace detail {
/// Row-wise softmax over the allowed entries; rows with no allowed entry are zero.
inline Matrix masked_softmax(Matrix S, const BoolMatrix& mask) {
  const auto L = S.rows();
  Matrix P = Matrix::Zero(L, S.cols());
  for (Eigen::Index i = 0; i < L; ++i) {
    bool any = false;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      if (!mask(static_cast<int>(i), static_cast<int>(j))) S(i, j) += kMaskedLogit;
      else any = true;
    }
    if (!any) continue;
    const double m = S.row(i).maxCoeff();
    P.row(i) = (S.row(i).array() - m).exp();
    for (Eigen::Index j = 0; j < S.cols(); ++j)
      if (!mask(static_cast<int>(i), static_cast<int>(j))) P(i, j) = 0.0;
    P.row(i) /= P.row(i).sum();
  }
  return P;
}
}  // namespace detail

/// `qkv` stacks B sequences of L rows; columns are [Q | K | V], each d wide.
/// Returns the (B*L x d) per-head outputs concatenated along columns.
inline Tensor masked_attention(const Tensor& qkv, std::span<const BoolMatrix> masks, int n_heads) {
  using detail::require;
  require(!masks.empty(), "masked_attention", "no masks given");
  const int L = masks[0].size();
  const auto B = static_cast<Eigen::Index>(masks.size());
  require(qkv.rows() == B * L, "masked_attention", "expected " + std::to_string(B * L) + " rows, got " +
                                                        std::to_string(qkv.rows()));
  require(qkv.cols() % 3 == 0, "masked_attention", "qkv width must be a multiple of 3");
  const auto d = qkv.cols() / 3;
  require(n_heads >= 1 && d % n_heads == 0, "masked_attention", "d_model must be divisible by n_heads");
  for (const auto& m : masks) require(m.size() == L, "masked_attention", "masks differ in size");
  const auto dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix& X = qkv.value();
  Matrix out = Matrix::Zero(B * L, d);
  // Attention weights, one L x L block per (sequence, head).
  std::vector<Matrix> probs(static_cast<std::size_t>(B * n_heads));

  for (Eigen::Index b = 0; b < B; ++b) {
    const BoolMatrix& mask = masks[static_cast<std::size_t>(b)];
    for (int h = 0; h < n_heads; ++h) {
      const auto Q = X.block(b * L, h * dh, L, dh);
      const auto K = X.block(b * L, d + h * dh, L, dh);
      const auto V = X.block(b * L, 2 * d + h * dh, L, dh);
      Matrix& P = probs[static_cast<std::size_t>(b * n_heads + h)];
      P = detail::masked_softmax((Q * K.transpose()) * inv_sqrt, mask);
      out.block(b * L, h * dh, L, dh).noalias() = P * V;
    }
  }

  return make_op(std::move(out), "masked_attention", {qkv},
                 [probs = std::move(probs), B, L, d, dh, n_heads, inv_sqrt](Node& self) {
                   const Matrix& X = self.parents[0]->value;
                   Matrix& G = detail::grad_of(self, 0);
                   for (Eigen::Index b = 0; b < B; ++b) {
                     for (int h = 0; h < n_heads; ++h) {
                       const Matrix& P = probs[static_cast<std::size_t>(b * n_heads + h)];
                       const auto Q = X.block(b * L, h * dh, L, dh);
                       const auto K = X.block(b * L, d + h * dh, L, dh);
                       const auto V = X.block(b * L, 2 * d + h * dh, L, dh);
                       const auto dO = self.grad.block(b * L, h * dh, L, dh);
                       Matrix dP = dO * V.transpose();
                       Eigen::VectorXd rowdot = (dP.cwiseProduct(P)).rowwise().sum();
                       Matrix dS = P.cwiseProduct(dP.colwise() - rowdot) * inv_sqrt;
                       G.block(b * L, h * dh, L, dh).noalias() += dS * K;
                       G.block(b * L, d + h * dh, L, dh).noalias() += dS.transpose() * Q;
                       G.block(b * L, 2 * d + h * dh, L, dh).noalias() += P.transpose() * dO;
                     }
                   }
                 });
}

/// Attention weights of one sequence (L rows of [Q | K | V]), one L x L matrix per head.
inline std::vector<Matrix> attention_weights(const Matrix& qkv, const BoolMatrix& mask, int n_heads) {
  detail::require(qkv.rows() == mask.size() && qkv.cols() % (3 * n_heads) == 0, "attention_weights", "shape mismatch");
  const auto d = qkv.cols() / 3;
  const auto dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> out;
  for (int h = 0; h < n_heads; ++h) {
    const auto Q = qkv.middleCols(h * dh, dh);
    const auto K = qkv.middleCols(d + h * dh, dh);
    out.push_back(detail::masked_softmax((Q * K.transpose()) * inv_sqrt, mask));
  }
  return out;
}

inline Tensor masked_attention(const Tensor& qkv, const BoolMatrix& mask, int n_heads) {
  return masked_attention(qkv, std::span<const BoolMatrix>(&mask, 1), n_heads);
}

}  // namespace offla::nn
