#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "offla/agents/agent_config.hpp"
#include "offla/dt/model.hpp"
#include "offla/env.hpp"
#include "offla/harness/kv_config.hpp"
#include "offla/util/hash.hpp"

namespace offla {

inline nn::Activation parse_activation(std::string_view s) {
  if (s == "relu") return nn::Activation::Relu;
  if (s == "gelu") return nn::Activation::Gelu;
  throw std::invalid_argument("unknown activation: " + std::string(s));
}

inline std::string_view to_string(nn::Activation a) { return a == nn::Activation::Relu ? "relu" : "gelu"; }

namespace detail {
/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename Range>
std::string join(const Range& r) {
  std::string out;
  for (const auto& v : r) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
      out += fmt(v);
    else
      out += std::to_string(v);
  }
  return out;
}
}  // namespace detail

inline EnvConfig read_env(const KeyValueConfig& kv, const std::string& p = "env.") {
  EnvConfig e;
  e.n_states = kv.get(p + "n_states", e.n_states);
  e.n_actions = kv.get(p + "n_actions", e.n_actions);
  e.context_max = kv.get(p + "context_max", e.context_max);
  e.beta = kv.get(p + "beta", e.beta);
  e.harq_delay = kv.get(p + "harq_delay", e.harq_delay);
  e.n_harq_processes = kv.get(p + "n_harq_processes", e.n_harq_processes);
  e.n_cqi = kv.get(p + "n_cqi", e.n_cqi);
  e.validate();
  return e;
}

inline void write_env(KeyValueConfig& kv, const EnvConfig& e, const std::string& p = "env.") {
  kv.set(p + "n_states", std::to_string(e.n_states));
  kv.set(p + "n_actions", std::to_string(e.n_actions));
  kv.set(p + "context_max", std::to_string(e.context_max));
  kv.set(p + "beta", detail::fmt(e.beta));
  kv.set(p + "harq_delay", std::to_string(e.harq_delay));
  kv.set(p + "n_harq_processes", std::to_string(e.n_harq_processes));
  kv.set(p + "n_cqi", std::to_string(e.n_cqi));
}

inline void read_agent(const KeyValueConfig& kv, const std::string& p, AgentConfig& c) {
  c.hidden_width = kv.get(p + "hidden_width", c.hidden_width);
  c.n_layers = kv.get(p + "n_layers", c.n_layers);
  c.activation = parse_activation(kv.get(p + "activation", std::string(to_string(c.activation))));
  c.training_steps = kv.get(p + "training_steps", c.training_steps);
  c.lr = kv.get(p + "lr", c.lr);
  c.batch_size = kv.get(p + "batch_size", c.batch_size);
  c.target_update_interval = kv.get(p + "target_update", c.target_update_interval);
  c.gamma = kv.get(p + "gamma", c.gamma);
  c.weight_decay = kv.get(p + "weight_decay", c.weight_decay);
  c.cql_alpha = kv.get(p + "cql_alpha", c.cql_alpha);
  c.bcq_tau = kv.get(p + "bcq_tau", c.bcq_tau);
  c.bcq_beta = kv.get(p + "bcq_beta", c.bcq_beta);
  c.dqn_epsilon_start = kv.get(p + "epsilon_start", c.dqn_epsilon_start);
  c.dqn_epsilon_end = kv.get(p + "epsilon_end", c.dqn_epsilon_end);
  c.dqn_epsilon_decay_steps = kv.get(p + "epsilon_decay_steps", c.dqn_epsilon_decay_steps);
  c.dqn_replay_capacity = kv.get(p + "replay_capacity", c.dqn_replay_capacity);
  c.dqn_warmup = kv.get(p + "warmup", c.dqn_warmup);
  c.continuing = kv.get(p + "continuing", c.continuing);
}

inline void write_agent(KeyValueConfig& kv, const AgentConfig& c, const std::string& p = "agent.") {
  kv.set(p + "hidden_width", std::to_string(c.hidden_width));
  kv.set(p + "n_layers", std::to_string(c.n_layers));
  kv.set(p + "activation", std::string(to_string(c.activation)));
  kv.set(p + "training_steps", std::to_string(c.training_steps));
  kv.set(p + "lr", detail::fmt(c.lr));
  kv.set(p + "batch_size", std::to_string(c.batch_size));
  kv.set(p + "target_update", std::to_string(c.target_update_interval));
  kv.set(p + "gamma", detail::fmt(c.gamma));
  kv.set(p + "weight_decay", detail::fmt(c.weight_decay));
  kv.set(p + "cql_alpha", detail::fmt(c.cql_alpha));
  kv.set(p + "bcq_tau", detail::fmt(c.bcq_tau));
  kv.set(p + "bcq_beta", detail::fmt(c.bcq_beta));
  kv.set(p + "epsilon_start", detail::fmt(c.dqn_epsilon_start));
  kv.set(p + "epsilon_end", detail::fmt(c.dqn_epsilon_end));
  kv.set(p + "epsilon_decay_steps", std::to_string(c.dqn_epsilon_decay_steps));
  kv.set(p + "replay_capacity", std::to_string(c.dqn_replay_capacity));
  kv.set(p + "warmup", std::to_string(c.dqn_warmup));
  kv.set(p + "continuing", c.continuing ? "true" : "false");
  kv.set(p + "seed", std::to_string(c.seed));
}

inline DtConfig read_dt(const KeyValueConfig& kv, const std::string& p = "dt.") {
  DtConfig c;
  c.n_layers = kv.get(p + "n_layers", c.n_layers);
  c.n_heads = kv.get(p + "n_heads", c.n_heads);
  c.d_model = kv.get(p + "d_model", c.d_model);
  c.mlp_ratio = kv.get(p + "mlp_ratio", c.mlp_ratio);
  c.activation = parse_activation(kv.get(p + "activation", std::string(to_string(c.activation))));
  c.n_packets = kv.get(p + "n_packets", c.n_packets);
  c.context_steps = kv.get(p + "context", c.context_steps);
  c.mode = parse_trajectory_mode(kv.get(p + "mode", std::string(to_string(c.mode))));
  c.training_steps = kv.get(p + "training_steps", c.training_steps);
  c.lr = kv.get(p + "lr", c.lr);
  c.batch_size = kv.get(p + "batch_size", c.batch_size);
  c.weight_decay = kv.get(p + "weight_decay", c.weight_decay);
  c.pos_encoding = nn::parse_positional_kind(kv.get(p + "pos_encoding", std::string(nn::to_string(c.pos_encoding))));
  c.conditioning.kind = parse_conditioning_kind(kv.get(p + "conditioning", std::string(to_string(c.conditioning.kind))));
  if (c.conditioning.kind == ConditioningKind::Davg) c.conditioning.gamma = 0.8;
  c.conditioning.gamma = kv.get(p + "rtg_gamma", c.conditioning.gamma);
  c.conditioning.quantile = kv.get(p + "quantile", c.conditioning.quantile);
  c.conditioning.window = kv.get(p + "window", c.conditioning.window);
  c.seed = kv.get<std::uint64_t>(p + "seed", c.seed);
  c.validate();
  return c;
}

inline void write_dt(KeyValueConfig& kv, const DtConfig& c, const std::string& p = "dt.") {
  kv.set(p + "n_layers", std::to_string(c.n_layers));
  kv.set(p + "n_heads", std::to_string(c.n_heads));
  kv.set(p + "d_model", std::to_string(c.d_model));
  kv.set(p + "mlp_ratio", std::to_string(c.mlp_ratio));
  kv.set(p + "activation", std::string(to_string(c.activation)));
  kv.set(p + "n_packets", std::to_string(c.n_packets));
  kv.set(p + "context", std::to_string(c.context_steps));
  kv.set(p + "mode", std::string(to_string(c.mode)));
  kv.set(p + "training_steps", std::to_string(c.training_steps));
  kv.set(p + "lr", detail::fmt(c.lr));
  kv.set(p + "batch_size", std::to_string(c.batch_size));
  kv.set(p + "weight_decay", detail::fmt(c.weight_decay));
  kv.set(p + "pos_encoding", std::string(nn::to_string(c.pos_encoding)));
  kv.set(p + "conditioning", std::string(to_string(c.conditioning.kind)));
  kv.set(p + "rtg_gamma", detail::fmt(c.conditioning.gamma));
  kv.set(p + "quantile", detail::fmt(c.conditioning.quantile));
  kv.set(p + "window", std::to_string(c.conditioning.window));
  kv.set(p + "seed", std::to_string(c.seed));
}

struct ExperimentConfig {
  KeyValueConfig source;
  EnvConfig env;
  double oracle_gamma = 0.99;
  double oracle_tol = 1e-10;

  std::string collect_policy = "dp-greedy";  // or "dqn"
  std::vector<double> collect_epsilons{0.0, 0.25, 0.5};
  std::vector<std::uint64_t> collect_seeds;  // default 1..20
  Tti collect_ttis = 10000;

  std::vector<std::string> train_data;  // explicit dataset files; otherwise the collected ones
  double train_epsilon = 0.0;

  DtConfig dt;
  std::optional<double> dt_omega;  // fixed conditioning target; otherwise the configured quantile
  std::vector<double> cctr_table;  // nominal per-CQI values for CCTR; empty means training quantiles
  double cctr_table_scale = 1.0;

  std::vector<std::uint64_t> eval_seeds{1001, 1002, 1003, 1004, 1005};
  Tti eval_horizon = 20000;
  std::vector<double> eval_quantiles{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> olla_targets{0.1, 0.3, 0.5, 0.7, 0.9};
  double olla_step_up = 5.0;
  int threads = 1;

  std::string out = "runs/default";
  std::uint64_t seed = 0;

  AgentConfig agent(AgentKind kind) const {
    AgentConfig c = AgentConfig::defaults_for(kind);
    read_agent(source, "agent.", c);
    read_agent(source, std::string(to_string(kind)) + ".", c);
    c.seed = seed;
    c.validate();
    return c;
  }

  DtConfig dt_config() const {
    DtConfig c = dt;
    c.seed = seed;
    return c;
  }

  /// FNV-1a of the canonical key=value listing; the output directory is excluded.
  std::uint64_t hash() const {
    KeyValueConfig kv = source;
    kv.set("seed", std::to_string(seed));
    std::string text;
    for (const auto& [k, v] : kv.values())
      if (k != "out") text += k + "=" + v + "\n";
    return fnv1a(text);
  }

  static ExperimentConfig from(const KeyValueConfig& kv, std::optional<std::uint64_t> seed_override = {},
                               std::optional<std::string> out_override = {}) {
    ExperimentConfig c;
    c.source = kv;
    const auto& s = c.source;
    c.env = read_env(s);
    c.oracle_gamma = s.get("oracle.gamma", c.oracle_gamma);
    c.oracle_tol = s.get("oracle.tol", c.oracle_tol);
    c.collect_policy = s.get("collect.policy", c.collect_policy);
    if (c.collect_policy != "dp-greedy" && c.collect_policy != "dqn")
      throw ConfigError("collect.policy must be dp-greedy or dqn");
    c.collect_epsilons = s.get_list("collect.epsilons", c.collect_epsilons);
    std::vector<std::uint64_t> dflt;
    for (std::uint64_t i = 1; i <= 20; ++i) dflt.push_back(i);
    c.collect_seeds = s.get_list("collect.seeds", dflt);
    c.collect_ttis = s.get<Tti>("collect.ttis", c.collect_ttis);
    c.train_data = s.get_list<std::string>("train.data", {});
    c.train_epsilon = s.get("train.epsilon", c.train_epsilon);
    c.dt = read_dt(s);
    if (s.has("dt.omega")) c.dt_omega = s.get("dt.omega", 0.0);
    c.cctr_table = s.get_list("dt.cctr_table", c.cctr_table);
    c.cctr_table_scale = s.get("dt.cctr_table_scale", c.cctr_table_scale);
    c.eval_seeds = s.get_list("eval.seeds", c.eval_seeds);
    c.eval_horizon = s.get<Tti>("eval.horizon", c.eval_horizon);
    c.eval_quantiles = s.get_list("eval.quantiles", c.eval_quantiles);
    c.olla_targets = s.get_list("eval.olla_targets", c.olla_targets);
    c.olla_step_up = s.get("eval.olla_step_up", c.olla_step_up);
    c.threads = s.get("eval.threads", c.threads);
    c.out = out_override ? *out_override : s.get("out", c.out);
    c.seed = seed_override ? *seed_override : s.get<std::uint64_t>("seed", c.seed);
    for (auto kind : {AgentKind::Dqn, AgentKind::Bc, AgentKind::Bcq, AgentKind::Cql}) c.agent(kind);
    c.validate();
    return c;
  }

  static ExperimentConfig defaults() { return from(KeyValueConfig{}); }

  void validate() const {
    auto distinct = [](const std::vector<std::uint64_t>& v) { return std::set(v.begin(), v.end()).size() == v.size(); };
    if (!(oracle_gamma > 0.0 && oracle_gamma < 1.0)) throw ConfigError("oracle.gamma must lie in (0,1)");
    if (!(oracle_tol > 0.0)) throw ConfigError("oracle.tol must be positive");
    if (!distinct(collect_seeds)) throw ConfigError("collect.seeds must be distinct");
    if (!distinct(eval_seeds)) throw ConfigError("eval.seeds must be distinct");
    if (eval_seeds.empty()) throw ConfigError("eval.seeds must not be empty");
    for (double e : collect_epsilons)
      if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("collect.epsilons must lie in [0,1]");
    for (double q : eval_quantiles)
      if (!(q > 0.0 && q <= 1.0)) throw ConfigError("eval.quantiles must lie in (0,1]");
    for (double t : olla_targets)
      if (!(t > 0.0 && t < 1.0)) throw ConfigError("eval.olla_targets must lie in (0,1)");
    if (collect_ttis < 0 || eval_horizon < 1) throw ConfigError("horizons must be positive");
    if (threads < 1) throw ConfigError("eval.threads must be >= 1");
    if (!cctr_table.empty() && static_cast<int>(cctr_table.size()) != env.n_cqi)
      throw ConfigError("dt.cctr_table needs one value per CQI bucket (" + std::to_string(env.n_cqi) + ")");
  }
};

}  // namespace offla
