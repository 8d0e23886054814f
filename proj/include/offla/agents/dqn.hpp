#pragma once

// Online DQN with a replay buffer and a periodically synced target network.
// Used as an alternative behavioral policy for data collection.

#include <algorithm>
#include <memory>
#include <random>
#include <vector>

#include "offla/agents/offline.hpp"
#include "offla/env.hpp"

namespace offla {

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) { data_.reserve(std::min<std::size_t>(capacity, 1 << 16)); }

  void push(const Transition& tr) {
    if (data_.size() < capacity_) {
      data_.push_back(tr);
    } else {
      data_[head_] = tr;
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::span<const Transition> items() const { return data_; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

inline double dqn_epsilon(const AgentConfig& cfg, int step) {
  const double frac = std::min(1.0, static_cast<double>(step) / cfg.dqn_epsilon_decay_steps);
  return cfg.dqn_epsilon_start + frac * (cfg.dqn_epsilon_end - cfg.dqn_epsilon_start);
}

/// Trains for cfg.training_steps environment steps; one gradient step per
/// environment step once the buffer holds dqn_warmup transitions.
inline std::shared_ptr<ValueNetwork> dqn_train(const EnvConfig& env_cfg, const AgentConfig& cfg,
                                               TrainStats* stats = nullptr) {
  cfg.validate();
  EnvConfig ecfg = env_cfg;
  ecfg.rng_seed = cfg.seed;
  LinkAdaptationEnv env(ecfg);
  std::mt19937_64 rng(cfg.seed);
  auto net = std::make_shared<ValueNetwork>(ObservationEncoder(ecfg), ecfg.n_actions, cfg, rng);
  ValueNetwork target = net->clone();
  nn::Adam opt(net->parameters(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.dqn_replay_capacity));
  Rng explore(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Rng sample_rng(cfg.seed + 7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(1, ecfg.n_actions);

  Observation obs = env.reset();
  for (int step = 0; step < cfg.training_steps; ++step) {
    const int a = u(explore) < dqn_epsilon(cfg, step) ? any_action(explore) : net->act(obs);
    const StepOutcome out = env.step(obs, a);
    Transition tr;
    tr.obs = obs;
    tr.action = a;
    tr.reward = out.reward;
    tr.next_obs = out.next_obs;
    tr.packet_id = obs.packet_id;
    tr.attempt = obs.k;
    tr.t_a = obs.t;
    tr.t_r = out.feedback_time;
    tr.packet_terminal = out.packet_terminal;
    buffer.push(tr);
    obs = out.next_obs;

    if (static_cast<int>(buffer.size()) < std::max(cfg.dqn_warmup, 1)) continue;
    std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
    std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch_size));
    for (auto& i : idx) i = pick(sample_rng);
    const auto batch = make_batch(buffer.items(), idx, net->encoder(), cfg.continuing);
    nn::Matrix y(cfg.batch_size, 1);
    {
      nn::NoGradGuard guard;
      const nn::Matrix qn = target.forward(batch.next_states).value();
      for (int i = 0; i < cfg.batch_size; ++i)
        y(i, 0) = td_target(batch.rewards[static_cast<std::size_t>(i)], cfg.gamma, qn.row(i).maxCoeff(),
                            batch.terminal[static_cast<std::size_t>(i)]);
    }
    nn::Tensor loss = nn::mse(nn::gather_cols(net->forward(batch.states), batch.actions), y);
    detail::check_finite(loss.item(), "dqn_train");
    opt.zero_grad();
    nn::backward(loss);
    opt.step();
    if (stats) stats->losses.push_back(loss.item());
    if ((step + 1) % cfg.target_update_interval == 0) target.copy_from(*net);
  }
  return net;
}

}  // namespace offla
