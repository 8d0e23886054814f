#pragma once

// Fixed-capacity windows over a transmission log, laid out as
// (omega, state, action) token triples with a delayed-feedback attention mask.

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "offla/transition.hpp"
#include "offla/util/bool_matrix.hpp"

namespace offla {

inline constexpr int kTokensPerStep = 3;

struct TokenStep {
  double omega = 0.0;
  Observation obs;
  int action = 0;  // 0 when unknown or padded
  std::uint64_t packet_id = 0;
  Tti t_a = 0;
  Tti t_r = 0;
  Tti delta_t = 0;
  bool is_pad = true;
  int stream_index = -1;  // position in the source stream, -1 for pads and queries
};

struct TokenSequence {
  std::vector<TokenStep> steps;  // left-padded to the window capacity
  BoolMatrix attn_mask;          // (3H x 3H) at token granularity

  int horizon() const { return static_cast<int>(steps.size()); }
  int n_tokens() const { return kTokensPerStep * horizon(); }
  int real_steps() const {
    return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const TokenStep& s) { return !s.is_pad; }));
  }
};

/// Token mask: a query may attend a key that is not later in the sequence when
/// both belong to the same packet, or when the key's feedback had arrived by the
/// query's action time. Pads take no part on either side.
inline BoolMatrix attention_mask(std::span<const TokenStep> steps) {
  const int n = kTokensPerStep * static_cast<int>(steps.size());
  BoolMatrix mask(n);
  for (int q = 0; q < n; ++q) {
    const TokenStep& qs = steps[static_cast<std::size_t>(q / kTokensPerStep)];
    if (qs.is_pad) continue;
    for (int k = 0; k <= q; ++k) {
      const TokenStep& ks = steps[static_cast<std::size_t>(k / kTokensPerStep)];
      if (ks.is_pad) continue;
      if (ks.packet_id == qs.packet_id || ks.t_r <= qs.t_a) mask.set(q, k, true);
    }
  }
  return mask;
}

/// Per-token action-time offsets from the first real step; pads get 0.
inline std::vector<Tti> temporal_offsets(std::span<const TokenStep> steps) {
  if (steps.empty()) throw std::invalid_argument("temporal_offsets: empty sequence");
  Tti origin = 0;
  for (const auto& s : steps)
    if (!s.is_pad) {
      origin = s.t_a;
      break;
    }
  std::vector<Tti> out;
  out.reserve(steps.size() * kTokensPerStep);
  for (const auto& s : steps)
    for (int i = 0; i < kTokensPerStep; ++i) out.push_back(s.is_pad ? 0 : s.t_a - origin);
  return out;
}

namespace detail {

inline TokenStep step_from(const Transition& tr, int stream_index) {
  TokenStep s;
  s.obs = tr.obs;
  s.action = tr.action;
  s.packet_id = tr.packet_id;
  s.t_a = tr.t_a;
  s.t_r = tr.t_r;
  s.is_pad = false;
  s.stream_index = stream_index;
  return s;
}

inline TokenSequence finish(std::vector<TokenStep> real, int capacity) {
  TokenSequence seq;
  seq.steps.assign(static_cast<std::size_t>(capacity - static_cast<int>(real.size())), TokenStep{});
  seq.steps.insert(seq.steps.end(), real.begin(), real.end());
  const auto offsets = temporal_offsets(seq.steps);
  for (std::size_t i = 0; i < seq.steps.size(); ++i) seq.steps[i].delta_t = offsets[i * kTokensPerStep];
  seq.attn_mask = attention_mask(seq.steps);
  return seq;
}

}  // namespace detail

/// The K most recent transmissions of `stream` (H = K), left-padded.
inline TokenSequence build_recent_transmissions(std::span<const Transition> stream, int K) {
  if (K < 1) throw std::invalid_argument("build_recent_transmissions: K must be >= 1");
  const std::size_t take = std::min(stream.size(), static_cast<std::size_t>(K));
  std::vector<TokenStep> real;
  real.reserve(take);
  for (std::size_t i = stream.size() - take; i < stream.size(); ++i)
    real.push_back(detail::step_from(stream[i], static_cast<int>(i)));
  return detail::finish(std::move(real), K);
}

/// All transmissions of the n_p packets most recently transmitted in `stream`,
/// left-padded to `capacity`. When they do not fit, the oldest are dropped.
inline TokenSequence build_consecutive_packets(std::span<const Transition> stream, int n_p, int capacity) {
  if (n_p < 1) throw std::invalid_argument("build_consecutive_packets: n_p must be >= 1");
  if (capacity < 1) throw std::invalid_argument("build_consecutive_packets: capacity must be >= 1");
  std::unordered_set<std::uint64_t> keep;
  std::vector<std::uint64_t> order;
  for (std::size_t i = stream.size(); i-- > 0;) {
    const auto id = stream[i].packet_id;
    if (!keep.count(id)) {
      if (static_cast<int>(keep.size()) == n_p) break;
      keep.insert(id);
    }
  }
  std::vector<TokenStep> real;
  for (std::size_t i = 0; i < stream.size(); ++i)
    if (keep.count(stream[i].packet_id)) real.push_back(detail::step_from(stream[i], static_cast<int>(i)));
  if (static_cast<int>(real.size()) > capacity) real.erase(real.begin(), real.end() - capacity);
  return detail::finish(std::move(real), capacity);
}

}  // namespace offla
