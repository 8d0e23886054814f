#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "offla/controller.hpp"
#include "offla/scheduler.hpp"

namespace offla {

struct SeedResult {
  std::uint64_t seed = 0;
  Tti horizon = 0;
  double total_return = 0.0;
  std::size_t transmissions = 0;
  std::size_t acks = 0;
  std::size_t packets = 0;  // packets whose last attempt was observed
  std::size_t packet_attempts = 0;
};

inline SeedResult summarize_run(std::span<const Transition> run, std::uint64_t seed, Tti horizon) {
  SeedResult r;
  r.seed = seed;
  r.horizon = horizon;
  for (const auto& tr : run) {
    r.total_return += tr.reward;
    ++r.transmissions;
    r.acks += tr.success();
    if (tr.packet_terminal) {
      ++r.packets;
      r.packet_attempts += static_cast<std::size_t>(tr.attempt) + 1;
    }
  }
  return r;
}

/// Aggregate over seeds. The spread is the sample standard deviation of the
/// per-seed totals (0 for a single seed); rates pool all transmissions.
struct EvalReport {
  std::string label;
  std::vector<SeedResult> seeds;
  double mean_return = 0.0;
  double std_return = 0.0;
  double success_rate = 0.0;
  double bler_analog = 0.0;
  double attempts_per_packet = 0.0;
  double reward_per_tti = 0.0;

  double relative_std() const { return mean_return == 0.0 ? 0.0 : std_return / std::abs(mean_return); }
  double std_error() const { return seeds.empty() ? 0.0 : std_return / std::sqrt(static_cast<double>(seeds.size())); }
};

inline EvalReport make_report(std::string label, std::vector<SeedResult> seeds) {
  EvalReport rep;
  rep.label = std::move(label);
  rep.seeds = std::move(seeds);
  const auto n = static_cast<double>(rep.seeds.size());
  if (rep.seeds.empty()) return rep;
  double tx = 0, acks = 0, packets = 0, attempts = 0, per_tti = 0;
  for (const auto& s : rep.seeds) {
    rep.mean_return += s.total_return;
    tx += static_cast<double>(s.transmissions);
    acks += static_cast<double>(s.acks);
    packets += static_cast<double>(s.packets);
    attempts += static_cast<double>(s.packet_attempts);
    per_tti += s.total_return / static_cast<double>(s.horizon);
  }
  rep.mean_return /= n;
  rep.reward_per_tti = per_tti / n;
  if (rep.seeds.size() > 1) {
    double ss = 0.0;
    for (const auto& s : rep.seeds) ss += (s.total_return - rep.mean_return) * (s.total_return - rep.mean_return);
    rep.std_return = std::sqrt(ss / (n - 1.0));
  }
  rep.success_rate = tx > 0 ? acks / tx : 0.0;
  rep.bler_analog = tx > 0 ? 1.0 - rep.success_rate : 0.0;
  rep.attempts_per_packet = packets > 0 ? attempts / packets : 0.0;
  return rep;
}

using ControllerFactory = std::function<std::unique_ptr<Controller>(std::uint64_t seed)>;

/// Runs a fresh controller per seed, the environment seeded with that seed.
/// Seeds are spread over `threads` workers; results keep seed order.
inline EvalReport evaluate(const std::string& label, const EnvConfig& env, const ControllerFactory& factory,
                           std::span<const std::uint64_t> seeds, Tti horizon, int threads = 1,
                           std::vector<TransitionStream>* traces = nullptr) {
  std::vector<SeedResult> results(seeds.size());
  std::vector<TransitionStream> runs(traces ? seeds.size() : 0);
  auto work = [&](std::size_t i) {
    EnvConfig cfg = env;
    cfg.rng_seed = seeds[i];
    auto ctl = factory(seeds[i]);
    const auto run = run_scheduler(cfg, *ctl, horizon, static_cast<std::uint32_t>(seeds[i]));
    results[i] = summarize_run(run, seeds[i], horizon);
    if (traces) runs[i] = run;
  };
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), seeds.size());
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < seeds.size(); i += n_workers) work(i);
      });
    for (auto& t : pool) t.join();
  }
  if (traces) *traces = std::move(runs);
  return make_report(label, std::move(results));
}

inline void write_report_header(std::ostream& os) {
  os << "policy,mean_return,std_return,relative_std,success_rate,bler_analog,attempts_per_packet,reward_per_tti\n";
}

inline void write_report_row(std::ostream& os, const EvalReport& r) {
  os << r.label << ',' << r.mean_return << ',' << r.std_return << ',' << r.relative_std() << ',' << r.success_rate << ','
     << r.bler_analog << ',' << r.attempts_per_packet << ',' << r.reward_per_tti << '\n';
}

inline void write_seed_rows(std::ostream& os, const EvalReport& r) {
  os << "policy,seed,total_return,transmissions,acks,packets,packet_attempts\n";
  for (const auto& s : r.seeds)
    os << r.label << ',' << s.seed << ',' << s.total_return << ',' << s.transmissions << ',' << s.acks << ',' << s.packets
       << ',' << s.packet_attempts << '\n';
}

}  // namespace offla
