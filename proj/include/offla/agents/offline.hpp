#pragma once

// Offline learners over a fixed transition log: behavior cloning, discrete
// batch-constrained Q-learning and conservative Q-learning.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "offla/agents/networks.hpp"
#include "offla/transition.hpp"

namespace offla {

struct TransitionBatch {
  nn::Matrix states;
  nn::Matrix next_states;
  std::vector<int> actions;  // 0-based columns
  std::vector<double> rewards;
  std::vector<bool> terminal;
};

inline TransitionBatch make_batch(std::span<const Transition> data, std::span<const std::size_t> idx,
                                  const ObservationEncoder& enc, bool continuing) {
  TransitionBatch b;
  std::vector<Observation> s, sn;
  s.reserve(idx.size());
  sn.reserve(idx.size());
  for (std::size_t i : idx) {
    const Transition& tr = data[i];
    s.push_back(tr.obs);
    sn.push_back(tr.next_obs);
    b.actions.push_back(tr.action - 1);
    b.rewards.push_back(tr.reward);
    b.terminal.push_back(!continuing && tr.packet_terminal);
  }
  b.states = enc.encode(s);
  b.next_states = enc.encode(sn);
  return b;
}

namespace detail {
inline void check_dataset(std::span<const Transition> data, int n_actions, const char* who) {
  if (data.empty()) throw std::invalid_argument(std::string(who) + ": empty dataset");
  for (const auto& tr : data)
    if (tr.action < 1 || tr.action > n_actions) throw std::invalid_argument(std::string(who) + ": action out of range");
}

inline void check_finite(double loss, const char* who) {
  if (!std::isfinite(loss)) throw std::runtime_error(std::string(who) + ": non-finite loss");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Behavior cloning

inline std::shared_ptr<ValueNetwork> bc_train(std::span<const Transition> data, const EnvConfig& env,
                                              const AgentConfig& cfg, TrainStats* stats = nullptr) {
  cfg.validate();
  detail::check_dataset(data, env.n_actions, "bc_train");
  std::mt19937_64 rng(cfg.seed);
  auto net = std::make_shared<ValueNetwork>(ObservationEncoder(env), env.n_actions, cfg, rng);
  nn::Adam opt(net->parameters(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  BatchSampler sampler(data.size(), cfg.seed + 1);
  for (int step = 0; step < cfg.training_steps; ++step) {
    const auto idx = sampler.sample(cfg.batch_size);
    const auto batch = make_batch(data, idx, net->encoder(), true);
    nn::Tensor loss = nn::softmax_cross_entropy(net->forward(batch.states), batch.actions);
    detail::check_finite(loss.item(), "bc_train");
    opt.zero_grad();
    nn::backward(loss);
    opt.step();
    if (stats) stats->losses.push_back(loss.item());
  }
  return net;
}

/// Mean negative log-likelihood of the logged actions under a BC classifier.
inline double mean_nll(const ValueNetwork& net, std::span<const Transition> data) {
  std::vector<Observation> obs;
  std::vector<int> act;
  for (const auto& tr : data) {
    obs.push_back(tr.obs);
    act.push_back(tr.action - 1);
  }
  nn::NoGradGuard guard;
  return nn::softmax_cross_entropy(net.forward(net.encoder().encode(obs)), act).item();
}

// ---------------------------------------------------------------------------
// Batch-constrained Q-learning

/// Actions (0-based) whose probability relative to the most likely action
/// exceeds tau. The most likely action is always allowed.
inline std::vector<int> bcq_action_filter(std::span<const double> probs, double tau) {
  if (probs.empty()) throw std::invalid_argument("bcq_action_filter: empty distribution");
  const auto best = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  const double pmax = probs[static_cast<std::size_t>(best)];
  std::vector<int> allowed;
  for (std::size_t a = 0; a < probs.size(); ++a)
    if (static_cast<int>(a) == best || probs[a] / pmax > tau) allowed.push_back(static_cast<int>(a));
  return allowed;
}

/// argmax of q over the filtered set, 0-based.
inline int bcq_select(std::span<const double> q, std::span<const double> probs, double tau) {
  const auto allowed = bcq_action_filter(probs, tau);
  int best = allowed.front();
  for (int a : allowed)
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  return best;
}

struct BcqDecision {
  std::vector<double> probs;
  int action = 0;  // 1-based
};

class BcqPolicy final : public Controller {
 public:
  BcqPolicy(std::shared_ptr<const BcqNetwork> net, double tau) : net_(std::move(net)), tau_(tau) {}

  int act(const Observation& obs) override {
    auto [q, p] = net_->evaluate(std::span(&obs, 1));
    std::vector<double> qrow(q.data(), q.data() + q.cols());
    std::vector<double> prow(p.data(), p.data() + p.cols());
    const int a = bcq_select(qrow, prow, tau_) + 1;
    if (audit_) audit_->push_back({std::move(prow), a});
    return a;
  }

  /// Records the behavior distribution and chosen action of every decision.
  void set_audit(std::vector<BcqDecision>* audit) { audit_ = audit; }
  double tau() const { return tau_; }

 private:
  std::shared_ptr<const BcqNetwork> net_;
  double tau_;
  std::vector<BcqDecision>* audit_ = nullptr;
};

/// Target: r + gamma * max of the target network's Q over the actions the
/// online behavior head allows at the next state.
inline std::shared_ptr<BcqNetwork> bcq_train(std::span<const Transition> data, const EnvConfig& env,
                                             const AgentConfig& cfg, TrainStats* stats = nullptr) {
  cfg.validate();
  detail::check_dataset(data, env.n_actions, "bcq_train");
  std::mt19937_64 rng(cfg.seed);
  auto net = std::make_shared<BcqNetwork>(ObservationEncoder(env), env.n_actions, cfg, rng);
  BcqNetwork target = net->clone();
  nn::Adam opt(net->parameters(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  BatchSampler sampler(data.size(), cfg.seed + 1);

  for (int step = 1; step <= cfg.training_steps; ++step) {
    const auto idx = sampler.sample(cfg.batch_size);
    const auto batch = make_batch(data, idx, net->encoder(), cfg.continuing);
    nn::Matrix y(cfg.batch_size, 1);
    {
      nn::NoGradGuard guard;
      const nn::Matrix probs = nn::softmax_rows(net->forward(batch.next_states).second.value());
      const nn::Matrix qn = target.forward(batch.next_states).first.value();
      for (int i = 0; i < cfg.batch_size; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        const std::span<const double> prow(probs.row(i).data(), static_cast<std::size_t>(probs.cols()));
        for (int a : bcq_action_filter(prow, cfg.bcq_tau)) best = std::max(best, qn(i, a));
        y(i, 0) = td_target(batch.rewards[static_cast<std::size_t>(i)], cfg.gamma, best,
                            batch.terminal[static_cast<std::size_t>(i)]);
      }
    }
    auto [q, logits] = net->forward(batch.states);
    nn::Tensor td = nn::mse(nn::gather_cols(q, batch.actions), y);
    nn::Tensor loss = nn::add(td, nn::scale(nn::softmax_cross_entropy(logits, batch.actions), cfg.bcq_beta));
    detail::check_finite(loss.item(), "bcq_train");
    opt.zero_grad();
    nn::backward(loss);
    opt.step();
    if (stats) stats->losses.push_back(loss.item());
    if (step % cfg.target_update_interval == 0) target.copy_from(*net);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Conservative Q-learning

/// bellman_error + alpha * mean_i(logsumexp_a Q(s_i, a) - Q(s_i, a_i)).
inline nn::Tensor cql_loss(const nn::Tensor& q_values, std::span<const int> data_actions, const nn::Tensor& bellman_error,
                           double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("cql_loss: alpha must be >= 0");
  if (alpha == 0.0) return bellman_error;
  nn::Tensor gap = nn::sub(nn::logsumexp_rows(q_values), nn::gather_cols(q_values, data_actions));
  return nn::add(bellman_error, nn::scale(nn::mean(gap), alpha));
}

inline std::shared_ptr<ValueNetwork> cql_train(std::span<const Transition> data, const EnvConfig& env,
                                               const AgentConfig& cfg, TrainStats* stats = nullptr) {
  cfg.validate();
  detail::check_dataset(data, env.n_actions, "cql_train");
  std::mt19937_64 rng(cfg.seed);
  auto net = std::make_shared<ValueNetwork>(ObservationEncoder(env), env.n_actions, cfg, rng);
  ValueNetwork target = net->clone();
  nn::Adam opt(net->parameters(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  BatchSampler sampler(data.size(), cfg.seed + 1);

  for (int step = 1; step <= cfg.training_steps; ++step) {
    const auto idx = sampler.sample(cfg.batch_size);
    const auto batch = make_batch(data, idx, net->encoder(), cfg.continuing);
    nn::Matrix y(cfg.batch_size, 1);
    {
      nn::NoGradGuard guard;
      const nn::Matrix qn = target.forward(batch.next_states).value();
      for (int i = 0; i < cfg.batch_size; ++i)
        y(i, 0) = td_target(batch.rewards[static_cast<std::size_t>(i)], cfg.gamma, qn.row(i).maxCoeff(),
                            batch.terminal[static_cast<std::size_t>(i)]);
    }
    nn::Tensor q = net->forward(batch.states);
    nn::Tensor bellman = nn::mse(nn::gather_cols(q, batch.actions), y);
    nn::Tensor loss = cql_loss(q, batch.actions, bellman, cfg.cql_alpha);
    detail::check_finite(loss.item(), "cql_train");
    opt.zero_grad();
    nn::backward(loss);
    opt.step();
    if (stats) stats->losses.push_back(loss.item());
    if (step % cfg.target_update_interval == 0) target.copy_from(*net);
  }
  return net;
}

/// Mean Q(s, a) over the logged state-action pairs.
inline double mean_dataset_q(const ValueNetwork& net, std::span<const Transition> data) {
  std::vector<Observation> obs;
  for (const auto& tr : data) obs.push_back(tr.obs);
  const nn::Matrix q = net.evaluate(obs);
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) s += q(static_cast<Eigen::Index>(i), data[i].action - 1);
  return s / static_cast<double>(data.size());
}

}  // namespace offla
