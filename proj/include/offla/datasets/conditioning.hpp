#pragma once

// Return-to-go targets used to condition the sequence model.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "offla/datasets/packets.hpp"

namespace offla {

enum class ConditioningKind { Vanilla, Davg, Cctr };

inline std::string_view to_string(ConditioningKind k) {
  switch (k) {
    case ConditioningKind::Vanilla: return "vanilla";
    case ConditioningKind::Davg: return "davg";
    case ConditioningKind::Cctr: return "cctr";
  }
  return "?";
}

inline ConditioningKind parse_conditioning_kind(std::string_view s) {
  if (s == "vanilla") return ConditioningKind::Vanilla;
  if (s == "davg") return ConditioningKind::Davg;
  if (s == "cctr") return ConditioningKind::Cctr;
  throw std::invalid_argument("unknown conditioning kind: " + std::string(s));
}

struct ConditioningSpec {
  ConditioningKind kind = ConditioningKind::Vanilla;
  double gamma = 1.0;     // VANILLA/CCTR in (0,1]; DAVG in (0,1)
  double quantile = 0.9;  // in (0,1]
  int window = 35;        // DAVG only

  void validate() const {
    if (!(quantile > 0.0 && quantile <= 1.0)) throw std::invalid_argument("ConditioningSpec: quantile must lie in (0,1]");
    if (kind == ConditioningKind::Davg) {
      if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("ConditioningSpec: DAVG gamma must lie in (0,1)");
      if (window < 1) throw std::invalid_argument("ConditioningSpec: window must be >= 1");
    } else if (!(gamma > 0.0 && gamma <= 1.0)) {
      throw std::invalid_argument("ConditioningSpec: gamma must lie in (0,1]");
    }
  }
};

/// Discounted sum of a packet's rewards from attempt k to its last attempt.
inline double rtg_vanilla(std::span<const double> rewards, int k, double gamma) {
  if (k < 0 || k >= static_cast<int>(rewards.size())) throw std::out_of_range("rtg_vanilla: attempt index out of range");
  double omega = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= k; --t) omega = rewards[static_cast<std::size_t>(t)] + gamma * omega;
  return omega;
}

inline double rtg_vanilla(const Packet& packet, int k, double gamma) {
  std::vector<double> r;
  r.reserve(packet.transitions.size());
  for (const auto& tr : packet.transitions) r.push_back(tr.reward);
  return rtg_vanilla(r, k, gamma);
}

/// (1 - gamma) * sum_{t=n}^{n+W-1} gamma^(t-n) r_t, truncated at the end of the stream.
inline double rtg_davg(std::span<const double> rewards, std::size_t n, double gamma, int window) {
  if (n >= rewards.size()) throw std::out_of_range("rtg_davg: position past the end of the stream");
  if (window < 1) throw std::invalid_argument("rtg_davg: window must be >= 1");
  const std::size_t end = std::min(rewards.size(), n + static_cast<std::size_t>(window));
  double acc = 0.0;
  for (std::size_t t = end; t-- > n;) acc = rewards[t] + gamma * acc;
  return (1.0 - gamma) * acc;
}

/// Per-step VANILLA RTG for every transition of a stream, aligned with the stream.
inline std::vector<double> vanilla_rtgs(std::span<const Transition> stream, double gamma) {
  std::vector<double> out(stream.size(), 0.0);
  std::map<std::pair<std::uint32_t, std::uint64_t>, std::vector<std::size_t>> by_packet;
  for (std::size_t i = 0; i < stream.size(); ++i) by_packet[{stream[i].seed_id, stream[i].packet_id}].push_back(i);
  for (const auto& [key, idx] : by_packet) {
    double omega = 0.0;
    for (std::size_t j = idx.size(); j-- > 0;) {
      omega = stream[idx[j]].reward + gamma * omega;
      out[idx[j]] = omega;
    }
  }
  return out;
}

/// Per-step DAVG RTG for a single-seed stream.
inline std::vector<double> davg_rtgs(std::span<const Transition> stream, double gamma, int window) {
  std::vector<double> r;
  r.reserve(stream.size());
  for (const auto& tr : stream) r.push_back(tr.reward);
  std::vector<double> out(stream.size());
  for (std::size_t n = 0; n < r.size(); ++n) out[n] = rtg_davg(r, n, gamma, window);
  return out;
}

/// Lower-interpolation quantile: the ceil(q n)-th smallest value (1-based).
inline double lower_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("lower_quantile: empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("lower_quantile: q must lie in (0,1]");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

/// First-attempt VANILLA RTGs of all packets whose first logged attempt is k = 0.
inline std::vector<double> first_attempt_rtgs(std::span<const Packet> packets, double gamma) {
  std::vector<double> out;
  for (const auto& p : packets)
    if (!p.transitions.empty() && p.transitions.front().attempt == 0) out.push_back(rtg_vanilla(p, 0, gamma));
  return out;
}

struct CqiTargets {
  std::vector<double> target;  // indexed by CQI bucket
  double global = 0.0;

  double at(int cqi) const {
    if (cqi < 0 || cqi >= static_cast<int>(target.size())) return global;
    return target[static_cast<std::size_t>(cqi)];
  }
};

/// Per-CQI q-quantile of first-attempt VANILLA RTGs; empty buckets use the global quantile.
inline CqiTargets cctr_targets(std::span<const Packet> packets, double q, int n_cqi, double gamma = 1.0) {
  if (n_cqi < 1) throw std::invalid_argument("cctr_targets: n_cqi must be >= 1");
  std::vector<std::vector<double>> buckets(static_cast<std::size_t>(n_cqi));
  std::vector<double> all;
  for (const auto& p : packets) {
    if (p.transitions.empty() || p.transitions.front().attempt != 0) continue;
    const double omega = rtg_vanilla(p, 0, gamma);
    all.push_back(omega);
    const int c = p.first_cqi();
    if (c >= 0 && c < n_cqi) buckets[static_cast<std::size_t>(c)].push_back(omega);
  }
  if (all.empty()) throw std::invalid_argument("cctr_targets: dataset contains no packets");
  CqiTargets out;
  out.global = lower_quantile(all, q);
  out.target.resize(static_cast<std::size_t>(n_cqi));
  for (int c = 0; c < n_cqi; ++c) {
    auto& b = buckets[static_cast<std::size_t>(c)];
    out.target[static_cast<std::size_t>(c)] = b.empty() ? out.global : lower_quantile(b, q);
  }
  return out;
}

/// Targets taken from a table of nominal per-CQI values (e.g. spectral efficiencies).
inline CqiTargets cctr_targets_from_table(std::span<const double> per_cqi, double scale = 1.0) {
  if (per_cqi.empty()) throw std::invalid_argument("cctr_targets_from_table: empty table");
  CqiTargets out;
  for (double v : per_cqi) out.target.push_back(v * scale);
  out.global = out.target.back();
  return out;
}

inline void write_cqi_targets_csv(const CqiTargets& t, std::ostream& os) {
  os << "cqi,target\n";
  os << std::setprecision(17);
  for (std::size_t c = 0; c < t.target.size(); ++c) os << c << ',' << t.target[c] << '\n';
}

inline void write_cqi_targets_csv(const CqiTargets& t, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_cqi_targets_csv(t, os);
}

}  // namespace offla
