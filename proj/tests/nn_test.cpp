#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "offla/nn/nn.hpp"
#include "support/gradcheck.hpp"

using namespace offla;
using namespace offla::nn;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
  return init_matrix(r, c, Init::Normal, s, rng);
}

void expect_grads_ok(const ParameterList& params, const std::function<Tensor()>& f) {
  const auto res = oracle::check_gradients(params, f);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
  EXPECT_GT(res.checked, 0u);
}

BoolMatrix random_mask(int L, std::mt19937_64& rng) {
  BoolMatrix m(L);
  std::bernoulli_distribution coin(0.6);
  for (int q = 0; q < L; ++q)
    for (int k = 0; k <= q; ++k) m.set(q, k, coin(rng));
  // One query with no visible key.
  for (int k = 0; k < L; ++k) m.set(1, k, false);
  return m;
}

}  // namespace

TEST(Autodiff, LinearMapGradientIsInput) {
  std::mt19937_64 rng(1);
  Tensor W = Tensor::parameter(randn(3, 4, rng));
  Tensor x = Tensor::constant(randn(2, 3, rng));
  backward(sum(matmul(x, W)));
  // d/dW sum(xW) = x^T 1.
  const Matrix expected = x.value().transpose() * Matrix::Ones(2, 4);
  EXPECT_TRUE(W.grad().isApprox(expected, 1e-14));
}

TEST(Autodiff, RepeatedBackwardDoublesGradients) {
  std::mt19937_64 rng(2);
  Tensor W = Tensor::parameter(randn(3, 3, rng));
  Tensor x = Tensor::constant(randn(4, 3, rng));
  Tensor loss = mean(gelu(matmul(x, W)));
  backward(loss);
  const Matrix once = W.grad();
  backward(loss);
  EXPECT_EQ(W.grad(), Matrix(2.0 * once));
}

TEST(Autodiff, ShapeErrorsNameTheOp) {
  Tensor a = Tensor::parameter(Matrix::Ones(2, 3));
  Tensor b = Tensor::parameter(Matrix::Ones(2, 3));
  try {
    matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
  EXPECT_THROW(add(a, Tensor::parameter(Matrix::Ones(3, 2))), ShapeError);
  EXPECT_THROW(backward(a), ShapeError);
}

TEST(Autodiff, NoGradGuardSkipsGraph) {
  Tensor a = Tensor::parameter(Matrix::Ones(2, 2));
  NoGradGuard g;
  Tensor b = scale(a, 2.0);
  EXPECT_FALSE(b.requires_grad());
}

TEST(Autodiff, DeterministicAcrossRuns) {
  auto run = [] {
    std::mt19937_64 rng(5);
    Mlp net({4, 8, 3}, Activation::Relu, rng);
    Tensor x = Tensor::constant(randn(6, 4, rng));
    auto params = net.parameters("m");
    zero_grad(params);
    backward(mean(net(x)));
    return params[0].tensor.grad();
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, ElementwiseAndReductions) {
  std::mt19937_64 rng(3);
  Tensor a = Tensor::parameter(randn(3, 4, rng));
  Tensor b = Tensor::parameter(randn(3, 4, rng));
  Tensor bias = Tensor::parameter(randn(1, 4, rng));
  ParameterList ps{{"a", a}, {"b", b}, {"bias", bias}};
  expect_grads_ok(ps, [&] { return sum(mul(add(a, scale(b, 0.7)), sub(a, b))); });
  expect_grads_ok(ps, [&] { return mean(gelu(add_bias(a, bias))); });
  const Matrix target = randn(3, 4, rng);
  expect_grads_ok(ps, [&] { return mse(add_bias(b, bias), target); });
}

TEST(GradCheck, ReluAwayFromKink) {
  std::mt19937_64 rng(4);
  Matrix v = randn(5, 5, rng);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v.data()[i]) < 0.05) v.data()[i] = 0.3;
  Tensor a = Tensor::parameter(v);
  expect_grads_ok({{"a", a}}, [&] { return sum(mul(relu(a), relu(a))); });
}

TEST(GradCheck, LayerNorm) {
  std::mt19937_64 rng(6);
  LayerNorm ln(6);
  Tensor x = Tensor::parameter(randn(4, 6, rng));
  auto params = ln.parameters("ln");
  // Perturb the affine parameters so the check is not at the identity.
  for (auto& p : params) Tensor(p.tensor).mutable_value() += randn(1, 6, rng, 0.3);
  params.push_back({"x", x});
  const Matrix w = randn(4, 6, rng);
  expect_grads_ok(params, [&] { return sum(mul(ln(x), Tensor::constant(w))); });
}

TEST(GradCheck, GatherScatterOps) {
  std::mt19937_64 rng(7);
  Embedding emb(5, 3, rng, 1.0);
  Tensor x = Tensor::parameter(randn(4, 3, rng));
  Tensor y = Tensor::parameter(randn(4, 3, rng));
  auto params = emb.parameters("e");
  params.push_back({"x", x});
  params.push_back({"y", y});
  const std::vector<int> idx{0, 4, -1, 4};
  const std::vector<int> rows{11, 0, 5, 5, 2};
  const Matrix w = randn(5, 3, rng);
  expect_grads_ok(params, [&] {
    Tensor inter = interleave_rows({emb(idx), x, y});
    return sum(mul(select_rows(inter, rows), Tensor::constant(w)));
  });
}

TEST(GradCheck, LossHeads) {
  std::mt19937_64 rng(8);
  Tensor q = Tensor::parameter(randn(5, 4, rng));
  const std::vector<int> act{0, 3, 1, 1, 2};
  const std::vector<double> w{1.0, 0.0, 2.0, 1.0, 0.5};
  ParameterList ps{{"q", q}};
  expect_grads_ok(ps, [&] { return softmax_cross_entropy(q, act, w); });
  expect_grads_ok(ps, [&] { return mean(sub(logsumexp_rows(q), gather_cols(q, act))); });
}

TEST(GradCheck, MaskedAttentionCore) {
  std::mt19937_64 rng(9);
  const int L = 5, heads = 2, d = 4;
  std::vector<BoolMatrix> masks{random_mask(L, rng), BoolMatrix::causal(L)};
  Tensor qkv = Tensor::parameter(randn(2 * L, 3 * d, rng));
  const Matrix w = randn(2 * L, d, rng);
  expect_grads_ok({{"qkv", qkv}}, [&] { return sum(mul(masked_attention(qkv, masks, heads), Tensor::constant(w))); });
}

TEST(GradCheck, MultiHeadAttentionModuleAndMlp) {
  std::mt19937_64 rng(10);
  const int L = 4, d = 6;
  MultiHeadSelfAttention mha(d, 3, rng, 0.5);
  Mlp mlp({d, 8, d}, Activation::Gelu, rng);
  Tensor x = Tensor::parameter(randn(L, d, rng));
  auto params = mha.parameters("attn");
  append(params, mlp.parameters("mlp"));
  params.push_back({"x", x});
  const BoolMatrix mask = BoolMatrix::causal(L);
  const Matrix w = randn(L, d, rng);
  expect_grads_ok(params, [&] {
    return sum(mul(mlp(mha(x, std::span<const BoolMatrix>(&mask, 1))), Tensor::constant(w)));
  });
}

TEST(GradCheck, PositionalEncoders) {
  std::mt19937_64 rng(11);
  const std::vector<int> steps{0, 0, 0, 1, 1, 1};
  const std::vector<double> dt{0, 0, 0, 3, 3, 3};
  const Matrix w = randn(6, 4, rng);
  for (auto kind : {PositionalKind::Be, PositionalKind::Lt}) {
    PositionalEncoder pe(kind, 2, 4, rng);
    expect_grads_ok(pe.parameters("pe"), [&] { return sum(mul(pe(steps, dt), Tensor::constant(w))); });
  }
}

TEST(Attention, IdentityMaskReturnsOwnValue) {
  std::mt19937_64 rng(12);
  const int L = 4, d = 4;
  Tensor qkv = Tensor::constant(randn(L, 3 * d, rng));
  const Tensor out = masked_attention(qkv, BoolMatrix::identity(L), 2);
  EXPECT_EQ(out.value(), Matrix(qkv.value().rightCols(d)));
}

TEST(Attention, SingleTokenGetsFullWeight) {
  std::mt19937_64 rng(13);
  Tensor qkv = Tensor::constant(randn(1, 6, rng));
  const Tensor out = masked_attention(qkv, BoolMatrix::causal(1), 1);
  EXPECT_EQ(out.value(), Matrix(qkv.value().rightCols(2)));
}

TEST(Attention, FullyMaskedRowIsZero) {
  std::mt19937_64 rng(14);
  BoolMatrix m = BoolMatrix::causal(3);
  for (int k = 0; k < 3; ++k) m.set(2, k, false);
  const Tensor out = masked_attention(Tensor::constant(randn(3, 6, rng)), m, 1);
  EXPECT_TRUE(out.value().row(2).isZero(0.0));
  EXPECT_TRUE(out.value().allFinite());
}

TEST(Attention, MaskedTokenPerturbationIsInvisible) {
  std::mt19937_64 rng(15);
  const int L = 6, d = 8;
  MultiHeadSelfAttention mha(d, 2, rng, 0.3);
  BoolMatrix m = BoolMatrix::causal(L);
  // Token 2 is hidden from every other query.
  for (int q = 0; q < L; ++q)
    if (q != 2) m.set(q, 2, false);
  Matrix x = randn(L, d, rng);
  const Matrix base = mha(Tensor::constant(x), std::span<const BoolMatrix>(&m, 1)).value();
  x.row(2) = randn(1, d, rng, 50.0);
  const Matrix pert = mha(Tensor::constant(x), std::span<const BoolMatrix>(&m, 1)).value();
  for (int r = 0; r < L; ++r)
    if (r != 2) EXPECT_EQ(base.row(r), pert.row(r)) << r;
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(16);
  const Matrix p = softmax_rows(randn(20, 28, rng, 5.0));
  for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
}

TEST(LayerNormStats, NormalizedRows) {
  std::mt19937_64 rng(17);
  LayerNorm ln(32);
  const Matrix y = ln(Tensor::constant(randn(10, 32, rng, 2.0))).value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double mu = y.row(r).mean();
    EXPECT_LT(std::abs(mu), 1e-10);
    EXPECT_NEAR((y.row(r).array() - mu).square().mean(), 1.0, 1e-8);
  }
}

TEST(Positional, ContinuousTimeValues) {
  const std::vector<double> dt{0.0, 100.0};
  const Matrix pe = continuous_time_encoding(dt, 6, 10000.0);
  for (int k = 0; k < 6; ++k) EXPECT_EQ(pe(0, k), k % 2 == 0 ? 0.0 : 1.0);
  // sin(1) at 30 digits.
  EXPECT_NEAR(pe(1, 0), 0.84147098480789650665250232163, 1e-15);
  EXPECT_NEAR(pe(1, 1), std::cos(1.0), 1e-15);
  EXPECT_NEAR(pe(1, 2), std::sin(1.0 / std::pow(10000.0, 2.0 / 6)), 1e-15);
  EXPECT_THROW(continuous_time_encoding(dt, 1), std::invalid_argument);
}

TEST(Positional, ZeroLinearTimeEncoding) {
  std::mt19937_64 rng(18);
  PositionalEncoder pe(PositionalKind::Lt, 4, 8, rng);
  pe.time_layer().weight().mutable_value().setZero();
  pe.time_layer().bias().mutable_value().setZero();
  const std::vector<int> steps{0, 1, 2};
  const std::vector<double> dt{0, 5, 250};
  EXPECT_TRUE(pe(steps, dt).value().isZero(0.0));
}

TEST(Adam, ZeroGradientNoDecayIsNoop) {
  Tensor p = Tensor::parameter(Matrix::Constant(2, 2, 0.7));
  Adam opt({{"p", p}}, AdamOptions{.lr = 0.1});
  opt.step();
  EXPECT_EQ(p.value(), Matrix::Constant(2, 2, 0.7));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::parameter(Matrix::Constant(1, 1, 2.0));
  Adam opt({{"p", p}}, AdamOptions{.lr = 0.1});
  p.mutable_grad()(0, 0) = 1.0;
  opt.step();
  // Bias-corrected moments are exactly g and g^2: step = lr * 1 / (1 + eps).
  EXPECT_NEAR(p.item(), 2.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, DecoupledWeightDecay) {
  Tensor p = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
  Adam opt({{"p", p}}, AdamOptions{.lr = 0.01, .weight_decay = 0.5});
  opt.step();
  EXPECT_DOUBLE_EQ(p.item(), 3.0 * (1.0 - 0.01 * 0.5));
}

TEST(Adam, NonFiniteGradientAborts) {
  Tensor p = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
  Adam opt({{"p", p}}, AdamOptions{});
  p.mutable_grad()(0, 0) = std::nan("");
  EXPECT_THROW(opt.step(), std::runtime_error);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  std::mt19937_64 rng(19);
  Mlp a({3, 5, 2}, Activation::Relu, rng);
  Mlp b({3, 5, 2}, Activation::Relu, rng);
  const auto base = (std::filesystem::temp_directory_path() / "offla_ckpt_test").string();
  save_checkpoint(a.parameters("m"), base, 0xabcdefULL);
  load_checkpoint(b.parameters("m"), base, 0xabcdefULL);
  const auto pa = a.parameters("m"), pb = b.parameters("m");
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].tensor.value(), pb[i].tensor.value());
  EXPECT_THROW(load_checkpoint(b.parameters("m"), base, 0x1ULL), std::runtime_error);
  Mlp c({3, 4, 2}, Activation::Relu, rng);
  EXPECT_THROW(load_checkpoint(c.parameters("m"), base), std::runtime_error);
  const auto manifest = read_checkpoint_manifest(base);
  EXPECT_EQ(manifest.at("tensors").size(), 4u);
  EXPECT_EQ(manifest.at("tensors")[1].at("offset").get<int>(), 15 * 8);
  std::filesystem::remove(base + ".bin");
  std::filesystem::remove(base + ".json");
}
