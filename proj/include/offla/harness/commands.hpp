#pragma once

// The experiment commands behind the command-line tool. Each writes its
// artifacts under the configured output directory; every CSV starts with a
// "# config_hash=..." line.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "offla/agents/agents.hpp"
#include "offla/datasets/jsonl.hpp"
#include "offla/dp_oracle.hpp"
#include "offla/dt/policy.hpp"
#include "offla/harness/experiment_config.hpp"
#include "offla/harness/report.hpp"
#include "offla/nn/checkpoint.hpp"
#include "offla/olla.hpp"

#ifndef OFFLA_VERSION_STRING
#define OFFLA_VERSION_STRING "0.1.0"
#endif

namespace offla {

inline std::string version_string() { return OFFLA_VERSION_STRING; }

namespace fs = std::filesystem;

class Workspace {
 public:
  explicit Workspace(ExperimentConfig cfg, std::ostream* log = nullptr) : cfg_(std::move(cfg)), log_(log) {}

  const ExperimentConfig& config() const { return cfg_; }
  fs::path out() const { return fs::path(cfg_.out); }

  fs::path dir(const std::string& sub) const {
    fs::path p = out() / sub;
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + p.string() + ": " + ec.message());
    return p;
  }

  std::ofstream open_csv(const fs::path& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << std::setprecision(10);
    os << "# config_hash=" << nn::hex64(cfg_.hash()) << '\n';
    return os;
  }

  void log(const std::string& msg) const {
    if (log_) *log_ << msg << std::endl;
  }

  /// Solved once per workspace; solving is cheap next to any training run.
  const QTable& oracle() {
    if (!oracle_) {
      log("solving value iteration");
      oracle_ = value_iteration(cfg_.env, cfg_.oracle_gamma, cfg_.oracle_tol);
    }
    return *oracle_;
  }

  static std::string epsilon_tag(double eps) { return detail::fmt(eps); }

  fs::path dataset_path(double eps, std::uint64_t seed) const {
    return out() / "data" / ("eps_" + epsilon_tag(eps) + "_seed_" + std::to_string(seed) + ".jsonl");
  }

  /// Training data: train.data files when given, else the collected files at train.epsilon.
  const TransitionStream& training_data() {
    if (train_data_) return *train_data_;
    TransitionStream all;
    std::vector<std::string> paths = cfg_.train_data;
    if (paths.empty())
      for (auto s : cfg_.collect_seeds) paths.push_back(dataset_path(cfg_.train_epsilon, s).string());
    for (const auto& p : paths) {
      if (!fs::exists(p)) throw std::runtime_error("training data not found: " + p + " (run collect first)");
      auto part = read_dataset(p);
      all.insert(all.end(), part.begin(), part.end());
    }
    if (all.empty()) throw std::runtime_error("training data is empty");
    train_data_ = std::move(all);
    return *train_data_;
  }

  fs::path checkpoint_base(const std::string& name) const { return out() / "agents" / name; }

 private:
  ExperimentConfig cfg_;
  std::ostream* log_;
  std::optional<QTable> oracle_;
  std::optional<TransitionStream> train_data_;
};

// ---------------------------------------------------------------------------

inline void train_oracle(Workspace& ws) {
  const auto& cfg = ws.config();
  std::size_t sweeps = 0;
  ValueIterationOptions opts;
  opts.gamma = cfg.oracle_gamma;
  opts.tol = cfg.oracle_tol;
  opts.on_sweep = [&](std::size_t s, double) { sweeps = s; };
  const QTable q = value_iteration(cfg.env, opts);
  const fs::path dir = ws.dir("oracle");
  save_qtable(q, (dir / "qtable.bin").string());
  auto os = ws.open_csv(dir / "summary.csv");
  os << "gamma,sweeps,residual,mean_value_k0\n";
  os << q.gamma() << ',' << sweeps << ',' << q.residual() << ',' << q.mean_value(0) << '\n';
  ws.log("oracle: " + std::to_string(sweeps) + " sweeps");
}

namespace detail {
class EpsilonNetworkController final : public Controller {
 public:
  EpsilonNetworkController(std::shared_ptr<const ValueNetwork> net, double eps, int n_actions, std::uint64_t seed)
      : net_(std::move(net)), eps_(eps), any_(1, n_actions), rng_(seed) {}
  int act(const Observation& obs) override {
    const double u = coin_(rng_);
    return u < eps_ ? any_(rng_) : net_->act(obs);
  }

 private:
  std::shared_ptr<const ValueNetwork> net_;
  double eps_;
  std::uniform_real_distribution<double> coin_{0.0, 1.0};
  std::uniform_int_distribution<int> any_;
  Rng rng_;
};

inline std::uint64_t controller_seed(std::uint64_t seed) { return seed ^ 0x5851f42d4c957f2dULL; }
}  // namespace detail

/// One dataset per (epsilon, seed) and a manifest.
inline void collect(Workspace& ws) {
  const auto& cfg = ws.config();
  ws.dir("data");
  std::shared_ptr<const ValueNetwork> dqn;
  if (cfg.collect_policy == "dqn") {
    ws.log("training DQN behavior policy");
    dqn = dqn_train(cfg.env, cfg.agent(AgentKind::Dqn));
  } else {
    ws.oracle();
  }
  nlohmann::ordered_json manifest;
  manifest["format"] = "offla-collection";
  manifest["version"] = version_string();
  manifest["config_hash"] = nn::hex64(cfg.hash());
  manifest["policy"] = cfg.collect_policy;
  manifest["ttis"] = cfg.collect_ttis;
  manifest["files"] = nlohmann::ordered_json::array();
  for (double eps : cfg.collect_epsilons)
    for (auto seed : cfg.collect_seeds) {
      EnvConfig env = cfg.env;
      env.rng_seed = seed;
      std::unique_ptr<Controller> ctl;
      if (dqn)
        ctl = std::make_unique<detail::EpsilonNetworkController>(dqn, eps, env.n_actions, detail::controller_seed(seed));
      else
        ctl = std::make_unique<OracleController>(ws.oracle(), eps, detail::controller_seed(seed));
      const auto data = run_scheduler(env, *ctl, cfg.collect_ttis, static_cast<std::uint32_t>(seed));
      const fs::path path = ws.dataset_path(eps, seed);
      write_dataset(path.string(), data);
      std::ifstream in(path, std::ios::binary);
      const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      manifest["files"].push_back({{"path", path.filename().string()},
                                   {"epsilon", eps},
                                   {"seed", seed},
                                   {"transitions", data.size()},
                                   {"fnv1a", nn::hex64(fnv1a(bytes))}});
    }
  std::ofstream os(ws.out() / "data" / "manifest.json");
  if (!os) throw std::runtime_error("cannot write collection manifest");
  os << manifest.dump(2) << '\n';
  ws.log("collected " + std::to_string(manifest["files"].size()) + " datasets");
}

// ---------------------------------------------------------------------------

namespace detail {
inline nlohmann::json kv_json(const KeyValueConfig& kv) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : kv.values()) j[k] = v;
  return j;
}

inline KeyValueConfig json_kv(const nlohmann::json& j) {
  KeyValueConfig kv;
  for (const auto& [k, v] : j.items()) kv.set(k, v.get<std::string>());
  return kv;
}

inline void write_losses(Workspace& ws, const std::string& name, const std::vector<double>& losses) {
  auto os = ws.open_csv(ws.dir("agents") / (name + "_loss.csv"));
  os << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) os << i + 1 << ',' << losses[i] << '\n';
}
}  // namespace detail

inline void train_agent(Workspace& ws, AgentKind kind) {
  const auto& cfg = ws.config();
  ws.dir("agents");
  const std::string name(to_string(kind));
  KeyValueConfig stored;
  write_env(stored, cfg.env);
  nn::ParameterList params;
  std::vector<double> losses;
  std::shared_ptr<void> keep_alive;

  if (kind == AgentKind::Dt) {
    const DtConfig dc = cfg.dt_config();
    write_dt(stored, dc);
    DtTrainStats stats;
    auto model = dt_train(ws.training_data(), cfg.env, dc, &stats);
    params = model->parameters();
    losses = std::move(stats.losses);
    keep_alive = model;
  } else {
    const AgentConfig ac = cfg.agent(kind);
    write_agent(stored, ac);
    TrainStats stats;
    if (kind == AgentKind::Bcq) {
      auto net = bcq_train(ws.training_data(), cfg.env, ac, &stats);
      params = net->parameters();
      keep_alive = net;
    } else {
      std::shared_ptr<ValueNetwork> net;
      if (kind == AgentKind::Dqn) net = dqn_train(cfg.env, ac, &stats);
      if (kind == AgentKind::Bc) net = bc_train(ws.training_data(), cfg.env, ac, &stats);
      if (kind == AgentKind::Cql) net = cql_train(ws.training_data(), cfg.env, ac, &stats);
      params = net->parameters();
      keep_alive = net;
    }
    losses = std::move(stats.losses);
  }
  nlohmann::json extra;
  extra["agent"] = name;
  extra["config"] = detail::kv_json(stored);
  extra["version"] = version_string();
  nn::save_checkpoint(params, ws.checkpoint_base(name).string(), cfg.hash(), extra);
  detail::write_losses(ws, name, losses);
  ws.log("trained " + name + " (" + std::to_string(losses.size()) + " steps)");
}

// ---------------------------------------------------------------------------

struct LoadedDt {
  std::shared_ptr<DecisionTransformer> model;
  DtConfig config;
};

inline LoadedDt load_dt(Workspace& ws) {
  const std::string base = ws.checkpoint_base("dt").string();
  if (!fs::exists(base + ".json")) throw std::runtime_error("no dt checkpoint in " + ws.out().string() + " (run train-agent dt)");
  const auto manifest = nn::read_checkpoint_manifest(base);
  const KeyValueConfig kv = detail::json_kv(manifest.at("extra").at("config"));
  LoadedDt out;
  out.config = read_dt(kv);
  out.model = std::make_shared<DecisionTransformer>(read_env(kv), out.config);
  nn::load_checkpoint(out.model->parameters(), base);
  return out;
}

/// Per-CQI targets: the configured table if any, else training quantiles.
inline OmegaPolicy cctr_policy(Workspace& ws, double quantile, double gamma) {
  const auto& cfg = ws.config();
  if (!cfg.cctr_table.empty()) return OmegaPolicy::cctr(cctr_targets_from_table(cfg.cctr_table, cfg.cctr_table_scale), gamma);
  return OmegaPolicy::cctr(cctr_targets(group_packets(ws.training_data()), quantile, cfg.env.n_cqi, gamma), gamma);
}

/// Conditioning for a DT run: an explicit target, the given training quantile, or per-CQI targets.
inline OmegaPolicy dt_omega_policy(Workspace& ws, const ConditioningSpec& spec, std::optional<double> quantile) {
  const auto& cfg = ws.config();
  if (spec.kind == ConditioningKind::Cctr && !quantile && !cfg.dt_omega)
    return cctr_policy(ws, spec.quantile, spec.gamma);
  double target = 0.0;
  if (quantile)
    target = training_quantile(ws.training_data(), spec, *quantile);
  else if (cfg.dt_omega)
    target = *cfg.dt_omega;
  else
    target = training_quantile(ws.training_data(), spec, spec.quantile);
  return spec.kind == ConditioningKind::Davg ? OmegaPolicy::davg(target) : OmegaPolicy::vanilla(target, spec.gamma);
}

/// Controller factory for a named policy: greedy, olla:<target>, dqn, bc, bcq, cql, dt.
inline ControllerFactory policy_factory(Workspace& ws, const std::string& name) {
  const auto& cfg = ws.config();
  if (name == "greedy") {
    const QTable* q = &ws.oracle();
    return [q](std::uint64_t) { return std::make_unique<OracleController>(*q, 0.0, 0); };
  }
  if (name.rfind("olla:", 0) == 0) {
    const double target = std::stod(name.substr(5));
    const EnvConfig env = cfg.env;
    const double step = cfg.olla_step_up;
    return [env, target, step](std::uint64_t) { return std::make_unique<OllaController>(env, target, step); };
  }
  if (name == "dt") {
    auto dt = load_dt(ws);
    auto omega = dt_omega_policy(ws, dt.config.conditioning, std::nullopt);
    return [model = dt.model, omega](std::uint64_t) { return std::make_unique<DtController>(model, omega); };
  }
  const AgentKind kind = parse_agent_kind(name);
  const std::string base = ws.checkpoint_base(name).string();
  if (!fs::exists(base + ".json"))
    throw std::runtime_error("no " + name + " checkpoint in " + ws.out().string() + " (run train-agent " + name + ")");
  const auto manifest = nn::read_checkpoint_manifest(base);
  const KeyValueConfig kv = detail::json_kv(manifest.at("extra").at("config"));
  const EnvConfig env = read_env(kv);
  AgentConfig ac = AgentConfig::defaults_for(kind);
  read_agent(kv, "agent.", ac);
  std::mt19937_64 rng(0);
  if (kind == AgentKind::Bcq) {
    auto net = std::make_shared<BcqNetwork>(ObservationEncoder(env), env.n_actions, ac, rng);
    nn::load_checkpoint(net->parameters(), base);
    const double tau = ac.bcq_tau;
    return [net, tau](std::uint64_t) { return std::make_unique<BcqPolicy>(net, tau); };
  }
  auto net = std::make_shared<ValueNetwork>(ObservationEncoder(env), env.n_actions, ac, rng);
  nn::load_checkpoint(net->parameters(), base);
  return [net](std::uint64_t) { return std::make_unique<NetworkPolicy>(net); };
}

inline std::string policy_label(const std::string& name) {
  if (name == "greedy") return "oracle-greedy";
  if (name.rfind("olla:", 0) == 0) return "OLLA(" + name.substr(5) + ")";
  std::string up = name;
  for (auto& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return up;
}

inline EvalReport evaluate_policy(Workspace& ws, const std::string& name) {
  const auto& cfg = ws.config();
  return evaluate(policy_label(name), cfg.env, policy_factory(ws, name), cfg.eval_seeds, cfg.eval_horizon, cfg.threads);
}

inline EvalReport eval(Workspace& ws, const std::string& name) {
  const EvalReport rep = evaluate_policy(ws, name);
  std::string file = name;
  for (auto& ch : file)
    if (ch == ':') ch = '_';
  auto os = ws.open_csv(ws.dir("eval") / (file + ".csv"));
  write_report_header(os);
  write_report_row(os, rep);
  write_seed_rows(os, rep);
  return rep;
}

struct SweepRow {
  std::string label;
  double target = 0.0;  // NaN for rows without a single target
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double relative_spread = 0.0;  // (max - min) / mean over the quantile rows
};

inline SweepResult sweep_conditioning(Workspace& ws) {
  const auto& cfg = ws.config();
  const auto dt = load_dt(ws);
  ConditioningSpec spec = dt.config.conditioning;
  SweepResult res;
  auto run = [&](const std::string& label, OmegaPolicy omega, double target) {
    auto factory = [model = dt.model, omega](std::uint64_t) { return std::make_unique<DtController>(model, omega); };
    res.rows.push_back({label, target, evaluate(label, cfg.env, factory, cfg.eval_seeds, cfg.eval_horizon, cfg.threads)});
  };
  const ConditioningSpec base = spec.kind == ConditioningKind::Cctr
                                    ? ConditioningSpec{ConditioningKind::Vanilla, spec.gamma, spec.quantile, spec.window}
                                    : spec;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
  for (double q : cfg.eval_quantiles) {
    const double target = training_quantile(ws.training_data(), base, q);
    const OmegaPolicy omega =
        base.kind == ConditioningKind::Davg ? OmegaPolicy::davg(target) : OmegaPolicy::vanilla(target, base.gamma);
    run("DT(q=" + detail::fmt(q) + ")", omega, target);
    const double m = res.rows.back().report.mean_return;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    sum += m;
  }
  if (!cfg.eval_quantiles.empty()) res.relative_spread = (hi - lo) / std::abs(sum / cfg.eval_quantiles.size());
  const double cctr_gamma = spec.kind == ConditioningKind::Davg ? 1.0 : spec.gamma;
  run("DT(CCTR)", cctr_policy(ws, spec.quantile, cctr_gamma), std::numeric_limits<double>::quiet_NaN());
  res.rows.push_back({"oracle-greedy", std::numeric_limits<double>::quiet_NaN(), evaluate_policy(ws, "greedy")});

  auto os = ws.open_csv(ws.out() / "sweep_conditioning.csv");
  os << "row,target,mean_return,std_return,relative_std,success_rate,bler_analog,attempts_per_packet,reward_per_tti\n";
  for (const auto& r : res.rows) {
    os << r.label << ',';
    if (!std::isnan(r.target)) os << r.target;
    const auto& p = r.report;
    os << ',' << p.mean_return << ',' << p.std_return << ',' << p.relative_std() << ',' << p.success_rate << ','
       << p.bler_analog << ',' << p.attempts_per_packet << ',' << p.reward_per_tti << '\n';
  }
  os << "# relative_spread=" << res.relative_spread << '\n';
  return res;
}

inline std::vector<EvalReport> compare(Workspace& ws) {
  const auto& cfg = ws.config();
  std::vector<std::string> names{"greedy"};
  for (double t : cfg.olla_targets) names.push_back("olla:" + detail::fmt(t));
  for (const char* a : {"dqn", "bc", "bcq", "cql", "dt"}) names.emplace_back(a);
  std::vector<EvalReport> out;
  for (const auto& n : names) out.push_back(evaluate_policy(ws, n));
  auto os = ws.open_csv(ws.out() / "compare.csv");
  write_report_header(os);
  for (const auto& r : out) write_report_row(os, r);
  return out;
}

}  // namespace offla
