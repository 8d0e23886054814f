#pragma once

// Outer-loop link adaptation: an inner loop maps the (offset-corrected)
// context to the most aggressive action meeting a BLER target, and the outer
// loop nudges the offset on every ACK/NACK.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "offla/controller.hpp"
#include "offla/env.hpp"

namespace offla {

/// Largest action whose success probability at x_effective is at least
/// 1 - target_bler; 1 when none qualifies.
inline int illa_select(double x_effective, double target_bler, int n_actions = 28, int context_max = 500) {
  if (!(target_bler > 0.0 && target_bler < 1.0)) throw std::invalid_argument("illa_select: target_bler must lie in (0,1)");
  const double x = std::clamp(x_effective, 0.0, static_cast<double>(context_max - 1));
  for (int a = n_actions; a >= 1; --a)
    if (std::tanh(x / (18.0 * a)) >= 1.0 - target_bler) return a;
  return 1;
}

struct OllaState {
  double offset = 0.0;
  double target_bler = 0.1;
  double step_up = 5.0;

  double step_down() const { return step_up * target_bler / (1.0 - target_bler); }

  void validate() const {
    if (!(target_bler > 0.0 && target_bler < 1.0)) throw std::invalid_argument("OllaState: target_bler must lie in (0,1)");
    if (!(step_up > 0.0) || !std::isfinite(step_up)) throw std::invalid_argument("OllaState: step_up must be positive");
    if (!std::isfinite(offset)) throw std::invalid_argument("OllaState: offset must be finite");
  }
};

/// NACK lowers the offset by step_up, ACK raises it by step_down; the result is
/// clamped to [-bound, bound].
inline OllaState olla_update(OllaState s, bool ack, double bound = 500.0) {
  s.offset += ack ? s.step_down() : -s.step_up;
  s.offset = std::clamp(s.offset, -bound, bound);
  return s;
}

class OllaController final : public Controller {
 public:
  OllaController(const EnvConfig& env, double target_bler, double step_up = 5.0)
      : env_(env), initial_{0.0, target_bler, step_up}, state_(initial_) {
    initial_.validate();
  }

  int act(const Observation& obs) override {
    return illa_select(obs.x + state_.offset, state_.target_bler, env_.n_actions, env_.context_max);
  }

  void on_feedback(const Transition& tr) override {
    state_ = olla_update(state_, tr.success(), static_cast<double>(env_.context_max));
  }

  void reset() override { state_ = initial_; }

  const OllaState& state() const { return state_; }

 private:
  EnvConfig env_;
  OllaState initial_;
  OllaState state_;
};

}  // namespace offla
