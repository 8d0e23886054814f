#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "offla/nn/attention.hpp"
#include "offla/nn/ops.hpp"
#include "offla/nn/tensor.hpp"

namespace offla::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

inline void append(ParameterList& dst, const ParameterList& src) { dst.insert(dst.end(), src.begin(), src.end()); }

inline void zero_grad(const ParameterList& params) {
  for (auto p : params) p.tensor.zero_grad();
}

enum class Init { Uniform, Normal, Zero };

inline Matrix init_matrix(Eigen::Index rows, Eigen::Index cols, Init init, double scale, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  switch (init) {
    case Init::Zero: m.setZero(); break;
    case Init::Uniform: {
      std::uniform_real_distribution<double> u(-scale, scale);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
      break;
    }
    case Init::Normal: {
      std::normal_distribution<double> n(0.0, scale);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
      break;
    }
  }
  return m;
}

/// y = x W + b with W stored (in x out).
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng, Init init = Init::Uniform, double scale = -1.0) {
    if (scale < 0.0) scale = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = Tensor::parameter(init_matrix(in, out, init, scale, rng));
    bias_ = Tensor::parameter(init == Init::Uniform ? init_matrix(1, out, Init::Uniform, scale, rng) : Matrix::Zero(1, out));
  }

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight_), bias_); }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  Eigen::Index in_features() const { return weight_.rows(); }
  Eigen::Index out_features() const { return weight_.cols(); }

  ParameterList parameters(const std::string& prefix) const {
    return {{prefix + ".weight", weight_}, {prefix + ".bias", bias_}};
  }

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int d, double eps = 1e-9)
      : gamma_(Tensor::parameter(Matrix::Ones(1, d))), beta_(Tensor::parameter(Matrix::Zero(1, d))), eps_(eps) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma_, beta_, eps_); }

  ParameterList parameters(const std::string& prefix) const {
    return {{prefix + ".gamma", gamma_}, {prefix + ".beta", beta_}};
  }

 private:
  Tensor gamma_;
  Tensor beta_;
  double eps_ = 1e-9;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(int n, int d, std::mt19937_64& rng, double stddev = 0.02)
      : table_(Tensor::parameter(init_matrix(n, d, Init::Normal, stddev, rng))) {}

  Tensor operator()(std::span<const int> idx) const { return embedding(table_, idx); }
  Tensor& table() { return table_; }

  ParameterList parameters(const std::string& prefix) const { return {{prefix + ".table", table_}}; }

 private:
  Tensor table_;
};

enum class Activation { Relu, Gelu };

inline Tensor activate(const Tensor& x, Activation a) { return a == Activation::Relu ? relu(x) : gelu(x); }

/// Stack of Linear layers with an activation between consecutive layers.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int>& widths, Activation act, std::mt19937_64& rng) : act_(act) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers_.emplace_back(widths[i], widths[i + 1], rng);
  }

  Tensor operator()(Tensor x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i](x);
      if (i + 1 < layers_.size()) x = activate(x, act_);
    }
    return x;
  }

  ParameterList parameters(const std::string& prefix) const {
    ParameterList out;
    for (std::size_t i = 0; i < layers_.size(); ++i) append(out, layers_[i].parameters(prefix + ".l" + std::to_string(i)));
    return out;
  }

  std::vector<Linear>& layers() { return layers_; }

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::Relu;
};

/// Multi-head self-attention: joint QKV projection, masked attention, output projection.
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(int d_model, int n_heads, std::mt19937_64& rng, double stddev = 0.02) : n_heads_(n_heads) {
    if (n_heads < 1 || d_model % n_heads != 0) throw ShapeError("MultiHeadSelfAttention: d_model must be divisible by n_heads");
    qkv_ = Linear(d_model, 3 * d_model, rng, Init::Normal, stddev);
    proj_ = Linear(d_model, d_model, rng, Init::Normal, stddev);
  }

  Tensor operator()(const Tensor& x, std::span<const BoolMatrix> masks) const {
    return proj_(masked_attention(qkv_(x), masks, n_heads_));
  }

  Linear& qkv() { return qkv_; }
  Linear& proj() { return proj_; }
  int n_heads() const { return n_heads_; }

  ParameterList parameters(const std::string& prefix) const {
    ParameterList out = qkv_.parameters(prefix + ".qkv");
    append(out, proj_.parameters(prefix + ".proj"));
    return out;
  }

 private:
  Linear qkv_;
  Linear proj_;
  int n_heads_ = 1;
};

}  // namespace offla::nn
