#pragma once

// Online inference: a Controller that keeps the transmission history it has
// observed and queries the model at each action time.

#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "offla/controller.hpp"
#include "offla/dt/model.hpp"

namespace offla {

/// omega <- (omega - r) / gamma once the reward of an attempt is known.
inline double next_omega(double omega, double reward, double gamma) { return (omega - reward) / gamma; }

/// How the conditioning value is chosen at inference.
class OmegaPolicy {
 public:
  static OmegaPolicy vanilla(double target, double gamma = 1.0) { return {ConditioningKind::Vanilla, target, gamma, {}}; }
  static OmegaPolicy davg(double target) { return {ConditioningKind::Davg, target, 1.0, {}}; }
  static OmegaPolicy cctr(CqiTargets targets, double gamma = 1.0) {
    return {ConditioningKind::Cctr, 0.0, gamma, std::move(targets)};
  }

  double first_attempt(const Observation& obs) const {
    return kind_ == ConditioningKind::Cctr ? targets_.at(obs.cqi) : target_;
  }

  double retransmission(double prev_omega, double prev_reward) const {
    return kind_ == ConditioningKind::Davg ? target_ : next_omega(prev_omega, prev_reward, gamma_);
  }

  ConditioningKind kind() const { return kind_; }
  double target() const { return target_; }

 private:
  OmegaPolicy(ConditioningKind kind, double target, double gamma, CqiTargets targets)
      : kind_(kind), target_(target), gamma_(gamma), targets_(std::move(targets)) {}

  ConditioningKind kind_;
  double target_;
  double gamma_;
  CqiTargets targets_;
};

/// Targets for a quantile sweep: VANILLA/CCTR use first-attempt packet returns,
/// DAVG uses the per-step windowed averages.
inline double training_quantile(std::span<const Transition> data, const ConditioningSpec& spec, double q) {
  if (spec.kind == ConditioningKind::Davg) {
    std::vector<double> all;
    for (auto s : split_by_seed(data)) {
      const auto v = davg_rtgs(s, spec.gamma, spec.window);
      all.insert(all.end(), v.begin(), v.end());
    }
    return lower_quantile(std::move(all), q);
  }
  return lower_quantile(first_attempt_rtgs(group_packets(data), spec.gamma), q);
}

class DtController final : public Controller {
 public:
  DtController(std::shared_ptr<const DecisionTransformer> model, OmegaPolicy omega)
      : model_(std::move(model)), omega_(std::move(omega)) {}

  int act(const Observation& obs) override {
    double omega = omega_.first_attempt(obs);
    if (obs.k > 0) {
      const auto it = last_.find(obs.packet_id);
      if (it != last_.end()) omega = omega_.retransmission(it->second.omega, it->second.reward);
    }

    Transition query;
    query.obs = obs;
    query.action = 0;
    query.packet_id = obs.packet_id;
    query.attempt = obs.k;
    query.t_a = obs.t;
    query.t_r = kPending;
    history_.push_back(query);
    omegas_.push_back(omega);

    const auto& cfg = model_->config();
    TokenSequence seq = build_window(history_, history_.size() - 1, cfg, model_->horizon());
    for (auto& s : seq.steps)
      if (!s.is_pad) s.omega = omegas_[static_cast<std::size_t>(s.stream_index)];
    const int a = model_->act(seq);

    history_.back().action = a;
    last_[obs.packet_id] = {omega, 0.0};
    trim();
    if (trace_) trace_->push_back(omega);
    return a;
  }

  void on_feedback(const Transition& tr) override {
    for (std::size_t i = history_.size(); i-- > 0;)
      if (history_[i].packet_id == tr.packet_id && history_[i].t_a == tr.t_a) {
        history_[i].t_r = tr.t_r;
        history_[i].reward = tr.reward;
        break;
      }
    if (tr.packet_terminal) {
      last_.erase(tr.packet_id);
    } else if (auto it = last_.find(tr.packet_id); it != last_.end()) {
      it->second.reward = tr.reward;
    }
  }

  void reset() override {
    history_.clear();
    omegas_.clear();
    last_.clear();
  }

  /// Records the conditioning value used at every decision.
  void set_omega_trace(std::vector<double>* trace) { trace_ = trace; }

 private:
  static constexpr Tti kPending = std::numeric_limits<Tti>::max();

  struct LastAttempt {
    double omega;
    double reward;
  };

  void trim() {
    const std::size_t keep = 8 * static_cast<std::size_t>(model_->horizon()) + 64;
    if (history_.size() < 2 * keep) return;
    const auto drop = static_cast<std::ptrdiff_t>(history_.size() - keep);
    history_.erase(history_.begin(), history_.begin() + drop);
    omegas_.erase(omegas_.begin(), omegas_.begin() + drop);
  }

  std::shared_ptr<const DecisionTransformer> model_;
  OmegaPolicy omega_;
  TransitionStream history_;
  std::vector<double> omegas_;
  std::unordered_map<std::uint64_t, LastAttempt> last_;
  std::vector<double>* trace_ = nullptr;
};

}  // namespace offla
