#pragma once

// Exact action values for the toy environment by value iteration over
// (retransmission state, context). The next context is uniform and independent
// of the action, so the continuation only needs the context-averaged value
// of each retransmission state.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "offla/controller.hpp"
#include "offla/env.hpp"
#include "offla/util/binary_io.hpp"
#include "offla/util/hash.hpp"

namespace offla {

class QTable {
 public:
  QTable() = default;
  QTable(int n_states, int context_max, int n_actions, double gamma)
      : n_states_(n_states),
        context_max_(context_max),
        n_actions_(n_actions),
        gamma_(gamma),
        values_(static_cast<std::size_t>(n_states) * context_max * n_actions, 0.0) {}

  int n_states() const { return n_states_; }
  int context_max() const { return context_max_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }
  double residual() const { return residual_; }
  void set_residual(double r) { residual_ = r; }

  /// Action a is 1-based.
  double& at(int k, int x, int a) { return values_[index(k, x, a)]; }
  double at(int k, int x, int a) const { return values_[index(k, x, a)]; }

  std::span<const double> row(int k, int x) const {
    return std::span(values_).subspan(index(k, x, 1), static_cast<std::size_t>(n_actions_));
  }
  std::span<double> row(int k, int x) {
    return std::span(values_).subspan(index(k, x, 1), static_cast<std::size_t>(n_actions_));
  }

  double value(int k, int x) const {
    auto r = row(k, x);
    return *std::max_element(r.begin(), r.end());
  }

  /// Context-averaged state value (1/context_max) sum_x max_a Q(k, x, a).
  double mean_value(int k) const {
    double s = 0.0;
    for (int x = 0; x < context_max_; ++x) s += value(k, x);
    return s / context_max_;
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

 private:
  std::size_t index(int k, int x, int a) const {
    return (static_cast<std::size_t>(k) * context_max_ + static_cast<std::size_t>(x)) * n_actions_ +
           static_cast<std::size_t>(a - 1);
  }

  int n_states_ = 0;
  int context_max_ = 0;
  int n_actions_ = 0;
  double gamma_ = 0.0;
  double residual_ = 0.0;
  std::vector<double> values_;
};

struct ValueIterationOptions {
  double gamma = 0.99;
  double tol = 1e-10;
  std::size_t max_iterations = 1'000'000;
  // Called with (iteration, sup-norm change) after every sweep.
  std::function<void(std::size_t, double)> on_sweep;
};

inline QTable value_iteration(const EnvConfig& cfg, const ValueIterationOptions& opts) {
  cfg.validate();
  if (!(opts.gamma > 0.0 && opts.gamma < 1.0)) throw std::invalid_argument("value_iteration: gamma must lie in (0,1)");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be > 0");

  const int ns = cfg.n_states, nc = cfg.context_max, na = cfg.n_actions;
  std::vector<double> p(static_cast<std::size_t>(nc) * na);
  for (int x = 0; x < nc; ++x)
    for (int a = 1; a <= na; ++a) p[static_cast<std::size_t>(x) * na + (a - 1)] = success_probability(cfg, x, a);
  std::vector<double> r_succ(static_cast<std::size_t>(na));
  for (int a = 1; a <= na; ++a) r_succ[static_cast<std::size_t>(a - 1)] = success_reward(a);

  QTable q(ns, nc, na, opts.gamma);
  std::vector<double> vbar(static_cast<std::size_t>(ns), 0.0);
  const double g = opts.gamma;

  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    for (int k = 0; k < ns; ++k) vbar[static_cast<std::size_t>(k)] = q.mean_value(k);
    double change = 0.0;
    for (int k = 0; k < ns; ++k) {
      const double succ_cont = g * vbar[0];
      const double fail = failure_reward(cfg, k) + g * vbar[static_cast<std::size_t>(next_state(cfg, k, false))];
      for (int x = 0; x < nc; ++x) {
        auto row = q.row(k, x);
        for (int a = 1; a <= na; ++a) {
          const double pr = p[static_cast<std::size_t>(x) * na + (a - 1)];
          const double updated = pr * (r_succ[static_cast<std::size_t>(a - 1)] + succ_cont) + (1.0 - pr) * fail;
          change = std::max(change, std::abs(updated - row[static_cast<std::size_t>(a - 1)]));
          row[static_cast<std::size_t>(a - 1)] = updated;
        }
      }
    }
    if (opts.on_sweep) opts.on_sweep(it, change);
    if (!std::isfinite(change)) throw std::runtime_error("value_iteration: non-finite update");
    if (change < opts.tol) {
      q.set_residual(change);
      return q;
    }
  }
  throw std::runtime_error("value_iteration: no convergence within " + std::to_string(opts.max_iterations) +
                           " sweeps");
}

inline QTable value_iteration(const EnvConfig& cfg, double gamma = 0.99, double tol = 1e-10) {
  ValueIterationOptions opts;
  opts.gamma = gamma;
  opts.tol = tol;
  return value_iteration(cfg, opts);
}

/// 1-based argmax, ties to the lowest action.
inline int argmax_action(std::span<const double> row) {
  if (row.empty()) throw std::invalid_argument("argmax_action: empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return static_cast<int>(best) + 1;
}

inline int greedy_action(const QTable& q, const Observation& obs) { return argmax_action(q.row(obs.k, obs.x)); }

inline int epsilon_greedy(const QTable& q, const Observation& obs, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon_greedy: epsilon must lie in [0,1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(1, q.n_actions());
    return pick(rng);
  }
  return greedy_action(q, obs);
}

/// Epsilon-greedy data-collection policy over an oracle table.
class OracleController final : public Controller {
 public:
  OracleController(const QTable& q, double epsilon, std::uint64_t seed) : q_(&q), epsilon_(epsilon), rng_(seed) {}
  int act(const Observation& obs) override {
    return epsilon_ == 0.0 ? greedy_action(*q_, obs) : epsilon_greedy(*q_, obs, epsilon_, rng_);
  }

 private:
  const QTable* q_;
  double epsilon_;
  Rng rng_;
};

// Binary layout: eight little-endian u64 header fields
// (magic, version, n_states, context_max, n_actions, gamma bits, residual bits,
// FNV-1a checksum of the value bytes) followed by the f64 values in
// (k, x, a) row-major order.
inline constexpr std::uint64_t kQTableMagic = 0x454c424154514f46ULL;  // "FOQTABLE" little-endian
inline constexpr std::uint64_t kQTableVersion = 1;

inline std::uint64_t qtable_checksum(const QTable& q) {
  const auto& v = q.values();
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(double)));
}

inline void save_qtable(const QTable& q, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  io::write_u64(os, kQTableMagic);
  io::write_u64(os, kQTableVersion);
  io::write_u64(os, static_cast<std::uint64_t>(q.n_states()));
  io::write_u64(os, static_cast<std::uint64_t>(q.context_max()));
  io::write_u64(os, static_cast<std::uint64_t>(q.n_actions()));
  io::write_f64(os, q.gamma());
  io::write_f64(os, q.residual());
  io::write_u64(os, qtable_checksum(q));
  for (double v : q.values()) io::write_f64(os, v);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline QTable load_qtable(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  if (io::read_u64(is) != kQTableMagic) throw std::runtime_error("not a q-table file: " + path);
  if (const auto ver = io::read_u64(is); ver != kQTableVersion)
    throw std::runtime_error("unsupported q-table version " + std::to_string(ver));
  const auto ns = static_cast<int>(io::read_u64(is));
  const auto nc = static_cast<int>(io::read_u64(is));
  const auto na = static_cast<int>(io::read_u64(is));
  const double gamma = io::read_f64(is);
  const double residual = io::read_f64(is);
  const std::uint64_t checksum = io::read_u64(is);
  if (ns < 1 || nc < 1 || na < 1) throw std::runtime_error("corrupt q-table header: " + path);
  QTable q(ns, nc, na, gamma);
  q.set_residual(residual);
  for (double& v : q.values()) v = io::read_f64(is);
  if (qtable_checksum(q) != checksum) throw std::runtime_error("q-table checksum mismatch: " + path);
  return q;
}

}  // namespace offla
