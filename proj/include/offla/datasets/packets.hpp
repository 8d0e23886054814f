#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "offla/transition.hpp"

namespace offla {

/// All logged transmissions of one packet, in attempt order.
struct Packet {
  std::uint32_t seed_id = 0;
  std::uint64_t packet_id = 0;
  std::vector<Transition> transitions;

  /// T(p): number of attempts.
  int termination_step() const { return static_cast<int>(transitions.size()); }
  /// False for packets cut off by the end of the log.
  bool complete() const { return !transitions.empty() && transitions.back().packet_terminal; }
  int first_cqi() const { return transitions.front().obs.cqi; }
};

/// Groups a stream into packets, ordered by the action time of each packet's
/// first transmission. Packets are keyed by (seed_id, packet_id).
inline std::vector<Packet> group_packets(std::span<const Transition> stream) {
  std::vector<Packet> packets;
  std::map<std::pair<std::uint32_t, std::uint64_t>, std::size_t> index;
  for (const Transition& tr : stream) {
    const auto key = std::make_pair(tr.seed_id, tr.packet_id);
    auto [it, inserted] = index.try_emplace(key, packets.size());
    if (inserted) {
      Packet p;
      p.seed_id = tr.seed_id;
      p.packet_id = tr.packet_id;
      packets.push_back(std::move(p));
    }
    packets[it->second].transitions.push_back(tr);
  }
  return packets;
}

/// Splits a concatenated multi-seed dataset into one contiguous stream per seed.
inline std::vector<std::span<const Transition>> split_by_seed(std::span<const Transition> stream) {
  std::vector<std::span<const Transition>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= stream.size(); ++i) {
    if (i == stream.size() || stream[i].seed_id != stream[begin].seed_id) {
      if (i > begin) out.push_back(stream.subspan(begin, i - begin));
      begin = i;
    }
  }
  return out;
}

}  // namespace offla
