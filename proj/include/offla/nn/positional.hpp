#pragma once

// Position information for token sequences: a learned table over step index
// (BE), a learned linear map of the action-time offset (LT), or a fixed
// sinusoid of the offset (CT).

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "offla/nn/layers.hpp"

namespace offla::nn {

enum class PositionalKind { Be, Lt, Ct };

inline std::string_view to_string(PositionalKind k) {
  switch (k) {
    case PositionalKind::Be: return "be";
    case PositionalKind::Lt: return "lt";
    case PositionalKind::Ct: return "ct";
  }
  return "?";
}

inline PositionalKind parse_positional_kind(std::string_view s) {
  if (s == "be") return PositionalKind::Be;
  if (s == "lt") return PositionalKind::Lt;
  if (s == "ct") return PositionalKind::Ct;
  throw std::invalid_argument("unknown positional encoding: " + std::string(s));
}

/// PE(dt, k) = sin((dt/100) / C^(k/d)) for even k, cos((dt/100) / C^((k-1)/d)) for odd k.
inline Matrix continuous_time_encoding(std::span<const double> delta_t, int d_model, double C = 10000.0) {
  if (d_model < 2) throw std::invalid_argument("continuous_time_encoding: d_model must be >= 2");
  if (!(C > 0.0)) throw std::invalid_argument("continuous_time_encoding: C must be > 0");
  Matrix pe(static_cast<Eigen::Index>(delta_t.size()), d_model);
  for (std::size_t i = 0; i < delta_t.size(); ++i) {
    const double scaled = delta_t[i] / 100.0;
    for (int k = 0; k < d_model; ++k) {
      const int even = k - (k % 2);
      const double arg = scaled / std::pow(C, static_cast<double>(even) / d_model);
      pe(static_cast<Eigen::Index>(i), k) = (k % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
  }
  return pe;
}

class PositionalEncoder {
 public:
  PositionalEncoder() = default;
  PositionalEncoder(PositionalKind kind, int max_steps, int d_model, std::mt19937_64& rng, double C = 10000.0)
      : kind_(kind), d_model_(d_model), C_(C) {
    if (d_model < 2) throw std::invalid_argument("PositionalEncoder: d_model must be >= 2");
    if (kind == PositionalKind::Be) table_ = Embedding(max_steps, d_model, rng);
    if (kind == PositionalKind::Lt) time_ = Linear(1, d_model, rng, Init::Normal, 0.02);
    if (kind == PositionalKind::Ct && !(C > 0.0)) throw std::invalid_argument("PositionalEncoder: C must be > 0");
  }

  /// One row per token. `step_index` feeds BE, `delta_t` feeds LT and CT.
  Tensor operator()(std::span<const int> step_index, std::span<const double> delta_t) const {
    switch (kind_) {
      case PositionalKind::Be: return table_(step_index);
      case PositionalKind::Lt: {
        Matrix dt(static_cast<Eigen::Index>(delta_t.size()), 1);
        for (std::size_t i = 0; i < delta_t.size(); ++i) dt(static_cast<Eigen::Index>(i), 0) = delta_t[i];
        return time_(Tensor::constant(std::move(dt)));
      }
      case PositionalKind::Ct: return Tensor::constant(continuous_time_encoding(delta_t, d_model_, C_));
    }
    throw std::logic_error("unreachable");
  }

  PositionalKind kind() const { return kind_; }
  Linear& time_layer() { return time_; }

  ParameterList parameters(const std::string& prefix) const {
    if (kind_ == PositionalKind::Be) return table_.parameters(prefix + ".be");
    if (kind_ == PositionalKind::Lt) return time_.parameters(prefix + ".lt");
    return {};
  }

 private:
  PositionalKind kind_ = PositionalKind::Ct;
  int d_model_ = 0;
  double C_ = 10000.0;
  Embedding table_;
  Linear time_;
};

}  // namespace offla::nn
