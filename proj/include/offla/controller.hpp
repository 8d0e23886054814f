#pragma once

#include "offla/transition.hpp"

namespace offla {

/// Anything that picks actions for the scheduler. Feedback for a transmission
/// is delivered at its t_r, never earlier.
class Controller {
 public:
  virtual ~Controller() = default;

  virtual int act(const Observation& obs) = 0;
  virtual void on_feedback(const Transition& /*tr*/) {}
  virtual void reset() {}
};

/// Adapts a stateless function (Observation -> action) to a Controller.
template <typename Fn>
class FunctionController final : public Controller {
 public:
  explicit FunctionController(Fn fn) : fn_(std::move(fn)) {}
  int act(const Observation& obs) override { return fn_(obs); }

 private:
  Fn fn_;
};

template <typename Fn>
FunctionController<Fn> make_controller(Fn fn) {
  return FunctionController<Fn>(std::move(fn));
}

}  // namespace offla
