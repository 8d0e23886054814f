#pragma once

#include <cstdint>
#include <vector>

#include "offla/env.hpp"

namespace offla {

/// One packet transmission as logged by the scheduler.
struct Transition {
  Observation obs;
  int action = 1;
  double reward = 0.0;
  Observation next_obs;
  std::uint64_t packet_id = 0;
  int attempt = 0;  // retransmission index k of this attempt
  Tti t_a = 0;      // TTI the action was taken
  Tti t_r = 0;      // TTI the ACK/NACK and reward become observable
  bool packet_terminal = false;
  std::uint32_t seed_id = 0;

  /// Success rewards are strictly positive, failure rewards are -beta(k+1) <= 0.
  bool success() const { return reward > 0.0; }

  friend bool operator==(const Transition&, const Transition&) = default;
};

using TransitionStream = std::vector<Transition>;

}  // namespace offla
