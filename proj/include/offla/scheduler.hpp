#pragma once

// TTI-level driver. With n_harq_processes > 1 several packets are in flight,
// so a packet's action can precede the feedback of an earlier packet.

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "offla/controller.hpp"
#include "offla/env.hpp"
#include "offla/transition.hpp"

namespace offla {

using TransitionSink = std::function<void(const Transition&)>;

/// Runs `controller` for `horizon` TTIs and passes every transmission to
/// `sink` in action-time order.
inline void run_scheduler(const EnvConfig& cfg, Controller& controller, Tti horizon, const TransitionSink& sink,
                          std::uint32_t seed_id = 0) {
  if (horizon <= 0) return;
  LinkAdaptationEnv env(cfg);

  struct Process {
    Observation obs;
    Tti ready_at = 0;
  };
  std::vector<Process> procs(static_cast<std::size_t>(cfg.n_harq_processes));
  procs[0].obs = env.reset();
  int context = procs[0].obs.x;
  for (std::size_t i = 1; i < procs.size(); ++i) procs[i].obs.packet_id = env.fresh_packet_id();

  std::deque<Transition> pending;  // ordered by t_r, since t_r = t_a + const
  std::size_t rr = 0;

  for (Tti t = 0; t < horizon; ++t) {
    while (!pending.empty() && pending.front().t_r <= t) {
      controller.on_feedback(pending.front());
      pending.pop_front();
    }

    std::size_t chosen = procs.size();
    for (std::size_t i = 0; i < procs.size(); ++i) {
      const std::size_t idx = (rr + i) % procs.size();
      if (procs[idx].ready_at <= t) {
        chosen = idx;
        break;
      }
    }
    if (chosen == procs.size()) continue;

    Process& proc = procs[chosen];
    Observation obs = proc.obs;
    obs.x = context;
    obs.cqi = cqi_bucket(cfg, context);
    obs.t = t;

    const int action = controller.act(obs);
    const StepOutcome out = env.step(obs, action);

    Transition tr;
    tr.obs = obs;
    tr.action = action;
    tr.reward = out.reward;
    tr.next_obs = out.next_obs;
    tr.packet_id = obs.packet_id;
    tr.attempt = obs.k;
    tr.t_a = t;
    tr.t_r = out.feedback_time;
    tr.packet_terminal = out.packet_terminal;
    tr.seed_id = seed_id;
    sink(tr);
    pending.push_back(tr);

    proc.obs = out.next_obs;
    proc.ready_at = out.feedback_time;
    context = out.next_obs.x;
    rr = (chosen + 1) % procs.size();
  }
}

inline TransitionStream run_scheduler(const EnvConfig& cfg, Controller& controller, Tti horizon,
                                      std::uint32_t seed_id = 0) {
  TransitionStream out;
  if (horizon > 0) out.reserve(static_cast<std::size_t>(horizon));
  run_scheduler(cfg, controller, horizon, [&](const Transition& tr) { out.push_back(tr); }, seed_id);
  return out;
}

}  // namespace offla
