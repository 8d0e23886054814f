#pragma once

#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "offla/agents/agent_config.hpp"
#include "offla/agents/encoding.hpp"
#include "offla/controller.hpp"
#include "offla/dp_oracle.hpp"
#include "offla/nn/nn.hpp"

namespace offla {

namespace detail {
inline void copy_values(const nn::ParameterList& dst, const nn::ParameterList& src) {
  if (dst.size() != src.size()) throw std::logic_error("copy_values: parameter lists differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    nn::Tensor d = dst[i].tensor;
    d.mutable_value() = src[i].tensor.value();
  }
}

inline int argmax_row(const nn::Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(r, c) > m(r, best)) best = c;
  return static_cast<int>(best);
}
}  // namespace detail

/// Observation -> one output per action (Q-values or logits).
class ValueNetwork {
 public:
  ValueNetwork() = default;
  ValueNetwork(ObservationEncoder enc, int n_actions, const AgentConfig& cfg, std::mt19937_64& rng)
      : enc_(enc), n_actions_(n_actions), cfg_(cfg) {
    std::vector<int> widths{enc_.width()};
    for (int i = 0; i + 1 < cfg.n_layers; ++i) widths.push_back(cfg.hidden_width);
    widths.push_back(n_actions);
    mlp_ = nn::Mlp(widths, cfg.activation, rng);
  }

  nn::Tensor forward(const nn::Matrix& features) const { return mlp_(nn::Tensor::constant(features)); }

  nn::Matrix evaluate(std::span<const Observation> obs) const {
    nn::NoGradGuard guard;
    return forward(enc_.encode(obs)).value();
  }

  /// 1-based greedy action, ties to the lowest index.
  int act(const Observation& obs) const { return detail::argmax_row(evaluate(std::span(&obs, 1)), 0) + 1; }

  /// Independent copy with its own parameter storage.
  ValueNetwork clone() const {
    std::mt19937_64 rng(0);
    ValueNetwork out(enc_, n_actions_, cfg_, rng);
    detail::copy_values(out.parameters(), parameters());
    return out;
  }

  void copy_from(const ValueNetwork& other) { detail::copy_values(parameters(), other.parameters()); }

  nn::ParameterList parameters() const { return mlp_.parameters("net"); }
  const ObservationEncoder& encoder() const { return enc_; }
  int n_actions() const { return n_actions_; }

 private:
  ObservationEncoder enc_;
  int n_actions_ = 0;
  AgentConfig cfg_;
  nn::Mlp mlp_;
};

/// Shared trunk with a Q head and a behavior-logit head.
class BcqNetwork {
 public:
  BcqNetwork() = default;
  BcqNetwork(ObservationEncoder enc, int n_actions, const AgentConfig& cfg, std::mt19937_64& rng)
      : enc_(enc), n_actions_(n_actions), cfg_(cfg) {
    std::vector<int> widths{enc_.width()};
    for (int i = 0; i + 1 < std::max(cfg.n_layers, 2); ++i) widths.push_back(cfg.hidden_width);
    trunk_ = nn::Mlp(widths, cfg.activation, rng);
    q_head_ = nn::Linear(cfg.hidden_width, n_actions, rng);
    b_head_ = nn::Linear(cfg.hidden_width, n_actions, rng);
  }

  /// (Q-values, behavior logits), each B x A.
  std::pair<nn::Tensor, nn::Tensor> forward(const nn::Matrix& features) const {
    nn::Tensor h = nn::activate(trunk_(nn::Tensor::constant(features)), cfg_.activation);
    return {q_head_(h), b_head_(h)};
  }

  std::pair<nn::Matrix, nn::Matrix> evaluate(std::span<const Observation> obs) const {
    nn::NoGradGuard guard;
    auto [q, b] = forward(enc_.encode(obs));
    return {q.value(), nn::softmax_rows(b.value())};
  }

  BcqNetwork clone() const {
    std::mt19937_64 rng(0);
    BcqNetwork out(enc_, n_actions_, cfg_, rng);
    detail::copy_values(out.parameters(), parameters());
    return out;
  }

  void copy_from(const BcqNetwork& other) { detail::copy_values(parameters(), other.parameters()); }

  nn::ParameterList parameters() const {
    nn::ParameterList p = trunk_.parameters("trunk");
    nn::append(p, q_head_.parameters("q_head"));
    nn::append(p, b_head_.parameters("b_head"));
    return p;
  }
  const ObservationEncoder& encoder() const { return enc_; }
  int n_actions() const { return n_actions_; }

 private:
  ObservationEncoder enc_;
  int n_actions_ = 0;
  AgentConfig cfg_;
  nn::Mlp trunk_;
  nn::Linear q_head_;
  nn::Linear b_head_;
};

/// Greedy controller over a ValueNetwork.
class NetworkPolicy final : public Controller {
 public:
  explicit NetworkPolicy(std::shared_ptr<const ValueNetwork> net) : net_(std::move(net)) {}
  int act(const Observation& obs) override { return net_->act(obs); }

 private:
  std::shared_ptr<const ValueNetwork> net_;
};

/// Uniform batch sampler over a fixed dataset.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : dist_(0, n - 1), rng_(seed) {
    if (n == 0) throw std::invalid_argument("BatchSampler: empty dataset");
  }
  std::vector<std::size_t> sample(int batch) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
    for (auto& i : idx) i = dist_(rng_);
    return idx;
  }

 private:
  std::uniform_int_distribution<std::size_t> dist_;
  Rng rng_;
};

/// TD target r + gamma * next_value, or r alone at a terminal step.
inline double td_target(double reward, double gamma, double next_value, bool terminal) {
  return terminal ? reward : reward + gamma * next_value;
}

struct TrainStats {
  std::vector<double> losses;
};

}  // namespace offla
