#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "offla/nn/layers.hpp"

namespace offla {

enum class AgentKind { Dqn, Bc, Bcq, Cql, Dt };

inline std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::Dqn: return "dqn";
    case AgentKind::Bc: return "bc";
    case AgentKind::Bcq: return "bcq";
    case AgentKind::Cql: return "cql";
    case AgentKind::Dt: return "dt";
  }
  return "?";
}

inline AgentKind parse_agent_kind(std::string_view s) {
  if (s == "dqn") return AgentKind::Dqn;
  if (s == "bc") return AgentKind::Bc;
  if (s == "bcq") return AgentKind::Bcq;
  if (s == "cql") return AgentKind::Cql;
  if (s == "dt") return AgentKind::Dt;
  throw std::invalid_argument("unknown agent kind: " + std::string(s));
}

struct AgentConfig {
  int hidden_width = 128;
  int n_layers = 3;  // linear layers, so n_layers - 1 hidden activations
  nn::Activation activation = nn::Activation::Relu;
  int training_steps = 20000;
  double lr = 5e-4;
  int batch_size = 64;
  int target_update_interval = 2000;
  double gamma = 0.99;
  double weight_decay = 0.0;

  double cql_alpha = 0.2;
  double bcq_tau = 0.5;
  double bcq_beta = 0.3;

  // Online DQN only.
  double dqn_epsilon_start = 1.0;
  double dqn_epsilon_end = 0.05;
  int dqn_epsilon_decay_steps = 10000;
  int dqn_replay_capacity = 50000;
  int dqn_warmup = 1000;

  // Bootstrap across packet boundaries instead of stopping at packet_terminal.
  bool continuing = false;
  std::uint64_t seed = 0;

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("AgentConfig: ") + what);
    };
    require(hidden_width >= 1 && n_layers >= 1, "layer sizes must be positive");
    require(training_steps >= 0 && batch_size >= 1 && target_update_interval >= 1, "counts must be positive");
    require(lr >= 0.0, "lr must be >= 0");
    require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0,1)");
    require(cql_alpha >= 0.0, "cql_alpha must be >= 0");
    require(bcq_tau >= 0.0 && bcq_tau <= 1.0, "bcq_tau must lie in [0,1]");
    require(bcq_beta >= 0.0, "bcq_beta must be >= 0");
    require(dqn_replay_capacity >= 1 && dqn_warmup >= 0 && dqn_epsilon_decay_steps >= 1, "bad DQN schedule");
  }

  /// Table values for CQL: lr 5e-4, batch 64, target update 2000, alpha 0.2.
  static AgentConfig cql_defaults() {
    AgentConfig c;
    c.lr = 5e-4;
    c.target_update_interval = 2000;
    c.cql_alpha = 0.2;
    return c;
  }

  /// Table values for BCQ: lr 1e-4, batch 64, target update 1024, tau 0.5, beta 0.3.
  static AgentConfig bcq_defaults() {
    AgentConfig c;
    c.lr = 1e-4;
    c.target_update_interval = 1024;
    c.bcq_tau = 0.5;
    c.bcq_beta = 0.3;
    return c;
  }

  static AgentConfig defaults_for(AgentKind kind) {
    if (kind == AgentKind::Cql) return cql_defaults();
    if (kind == AgentKind::Bcq) return bcq_defaults();
    return AgentConfig{};
  }
};

}  // namespace offla
