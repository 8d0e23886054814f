#pragma once

// Toy link-adaptation environment: a packet is retransmitted with an MCS-like
// action until it is acknowledged or it has used all n_states attempts.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

namespace offla {

using Rng = std::mt19937_64;
using Tti = std::int64_t;

/// Success rewards are tanh(a / kRewardScale); the scale is the size of the
/// full MCS table and stays fixed when n_actions is reduced for small instances.
inline constexpr double kRewardScale = 28.0;

struct EnvConfig {
  int n_states = 5;
  int n_actions = 28;
  int context_max = 500;
  double beta = 0.5;
  int harq_delay = 1;
  int n_harq_processes = 1;
  int n_cqi = 15;
  std::uint64_t rng_seed = 0;
  // Replaces tanh(x / 18a) with a constant. Only used to build degenerate
  // instances with closed-form values.
  std::optional<double> forced_success_probability;

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("EnvConfig: ") + what);
    };
    require(n_states >= 1, "n_states must be >= 1");
    require(n_actions >= 1, "n_actions must be >= 1");
    require(context_max >= 1, "context_max must be >= 1");
    require(beta >= 0.0 && std::isfinite(beta), "beta must be finite and >= 0");
    require(harq_delay >= 1, "harq_delay must be >= 1");
    require(n_harq_processes >= 1, "n_harq_processes must be >= 1");
    require(n_cqi >= 1, "n_cqi must be >= 1");
    if (forced_success_probability) {
      const double p = *forced_success_probability;
      require(p >= 0.0 && p <= 1.0, "forced_success_probability must lie in [0,1]");
    }
  }

  bool valid_action(int a) const { return a >= 1 && a <= n_actions; }
  bool valid_context(int x) const { return x >= 0 && x < context_max; }
};

struct Observation {
  int k = 0;    // retransmission state, 0 = first attempt
  int x = 0;    // channel context in [0, context_max)
  int cqi = 0;  // context bucket
  Tti t = 0;
  std::uint64_t packet_id = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepOutcome {
  double reward = 0.0;
  bool success = false;
  Observation next_obs;
  bool packet_terminal = false;
  Tti feedback_time = 0;
};

inline int cqi_bucket(int x, int context_max, int n_cqi) {
  return static_cast<int>((static_cast<std::int64_t>(x) * n_cqi) / context_max);
}

inline int cqi_bucket(const EnvConfig& cfg, int x) { return cqi_bucket(x, cfg.context_max, cfg.n_cqi); }

inline double success_probability(const EnvConfig& cfg, int x, int a) {
  if (!cfg.valid_context(x)) throw std::domain_error("success_probability: context out of range");
  if (!cfg.valid_action(a)) throw std::domain_error("success_probability: action out of range");
  if (cfg.forced_success_probability) return *cfg.forced_success_probability;
  return std::tanh(static_cast<double>(x) / (18.0 * a));
}

inline double success_reward(int a) { return std::tanh(a / kRewardScale); }

inline double failure_reward(const EnvConfig& cfg, int k) { return -cfg.beta * (k + 1); }

/// Retransmission state after an attempt in state k.
inline int next_state(const EnvConfig& cfg, int k, bool success) {
  if (success || k == cfg.n_states - 1) return 0;
  return k + 1;
}

class LinkAdaptationEnv {
 public:
  explicit LinkAdaptationEnv(EnvConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.rng_seed) { cfg_.validate(); }

  const EnvConfig& config() const { return cfg_; }
  Rng& rng() { return rng_; }

  /// Starts a fresh packet at t = 0 with a freshly drawn context.
  Observation reset() {
    next_packet_id_ = 0;
    Observation obs;
    obs.packet_id = fresh_packet_id();
    obs.x = draw_context();
    obs.cqi = cqi_bucket(cfg_, obs.x);
    return obs;
  }

  std::uint64_t fresh_packet_id() { return next_packet_id_++; }

  int draw_context() {
    std::uniform_int_distribution<int> dist(0, cfg_.context_max - 1);
    return dist(rng_);
  }

  bool draw_success(int x, int a) {
    const double p = success_probability(cfg_, x, a);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng_) < p;
  }

  /// One transmission of obs's packet with action a. The success draw happens
  /// before the next-context draw; the scheduler relies on that order.
  StepOutcome step(const Observation& obs, int a) {
    if (!cfg_.valid_action(a)) throw std::domain_error("step: action out of range");
    if (obs.k < 0 || obs.k >= cfg_.n_states) throw std::domain_error("step: retransmission state out of range");
    StepOutcome out;
    out.success = draw_success(obs.x, a);
    out.reward = out.success ? success_reward(a) : failure_reward(cfg_, obs.k);
    out.packet_terminal = out.success || obs.k == cfg_.n_states - 1;
    out.feedback_time = obs.t + cfg_.harq_delay;

    Observation& next = out.next_obs;
    next.k = next_state(cfg_, obs.k, out.success);
    next.x = draw_context();
    next.cqi = cqi_bucket(cfg_, next.x);
    next.t = out.feedback_time;
    next.packet_id = out.packet_terminal ? fresh_packet_id() : obs.packet_id;
    return out;
  }

 private:
  EnvConfig cfg_;
  Rng rng_;
  std::uint64_t next_packet_id_ = 0;
};

}  // namespace offla
